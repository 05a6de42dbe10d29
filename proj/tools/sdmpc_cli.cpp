// Command-line front end: collect, synth, run, campaign, report.
//
// Exit codes: 0 success, 1 infeasibility, synthesis or excitation failure,
// 2 bad arguments or scenario.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdmpc/campaign.hpp"
#include "sdmpc/data_io.hpp"

namespace fs = std::filesystem;
using namespace sdmpc;

namespace {

struct Common {
  std::string preset = "scalar_case1";
  std::string scenario_file;
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::optional<int> samples;
  std::optional<int> steps;
  std::string out = "out";
  int threads = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--preset", c.preset, "Preset scenario")
      ->check(CLI::IsMember(preset_names()))
      ->capture_default_str();
  app->add_option("--scenario", c.scenario_file, "Scenario JSON; keys override the preset")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Random seed");
  app->add_option("--variant", c.variant, "I (measured), II (estimated) or III (identified model)");
  app->add_option("--samples", c.samples, "Number of closed-loop runs")->check(CLI::PositiveNumber);
  app->add_option("--steps", c.steps, "Steps per run")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
}

Scenario load(const Common& c) {
  Scenario s = preset(c.preset);
  if (!c.scenario_file.empty()) {
    std::ifstream f(c.scenario_file);
    s = scenario_from_json(nlohmann::json::parse(f), s);
  }
  if (c.seed) s.seed = *c.seed;
  if (!c.variant.empty()) s.variant = variant_from_string(c.variant);
  if (c.samples) s.samples = *c.samples;
  if (c.steps) {
    s.steps = *c.steps;
    s.transient = std::min(s.transient, s.steps - 1);
  }
  s.validate();
  return s;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << j.dump(2) << '\n';
}

void print_offline(const Scenario& s, const OfflineArtifacts& a) {
  std::printf("scenario %s, variant %s, seed %llu\n", s.name.c_str(), to_string(s.variant),
              static_cast<unsigned long long>(s.seed));
  std::printf("sigma_x = %.4f, sigma_u = %.4f (%s)\n", a.sigma_x, a.sigma_u,
              s.resolved_sigma_mode() == SigmaMode::kGaussian ? "gaussian" : "distribution free");
  std::printf("data: T = %d, PE order %d, attempts %d\n", s.T, a.pe_order, a.attempts);
  if (s.nx() == 1)
    std::printf("P = %.4f, K = %.4f, Gamma = %.5f, gamma = %g\n", a.ingredients.P(0, 0), a.ingredients.K(0, 0),
                a.ingredients.Gamma(0, 0), a.ingredients.gamma_level);
  else
    std::printf("spectral radius of closed loop = %.4f, gamma = %g\n", spectral_radius(a.ingredients.closed_loop),
                a.ingredients.gamma_level);
  std::printf("alpha = %.6g (unscaled %.6g), terminal check %s\n", a.alpha, 2 * a.alpha,
              a.terminal_report.passed() ? "passed" : "FAILED");
}

void print_summary(const nlohmann::json& j) {
  std::printf("runs %d, failed %d\n", j.at("runs").get<int>(), j.at("failed").get<int>());
  std::printf("J_cl = %.6f +- %.6f (unscaled %.6f +- %.6f)\n", j.at("J_cl_mean").get<double>(),
              j.at("J_cl_sd").get<double>(), j.at("J_cl_mean_unscaled").get<double>(),
              j.at("J_cl_sd_unscaled").get<double>());
  std::printf("long-run stage cost = %.6g +- %.2g (alpha = %.6g)\n", j.at("long_run_mean").get<double>(),
              j.at("long_run_se").get<double>(), j.at("alpha").get<double>());
  std::printf("backup steps %d of %d, max q %d\n", j.at("backup_steps").get<int>(), j.at("total_steps").get<int>(),
              j.at("max_q").get<int>());
  std::printf("max |slack| %.3g, max descent residual %.3g, max candidate residual %.3g\n",
              j.at("max_slack").get<double>(), j.at("max_descent_residual").get<double>(),
              j.at("max_candidate_residual").get<double>());
  const auto& freq = j.at("x_violation_freq");
  for (std::size_t i = 0; i < freq.size(); ++i)
    std::printf("x%zu violation frequency after transient %.4f\n", i + 1, freq[i].get<double>());
  std::printf("time per step %.4g +- %.2g s\n", j.at("step_seconds_mean").get<double>(),
              j.at("step_seconds_sd").get<double>());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven stochastic predictive control experiments"};
  app.require_subcommand(1);
  Common common;

  CLI::App* collect = app.add_subcommand("collect", "Sample the offline record and write data.csv");
  CLI::App* synth = app.add_subcommand("synth", "Offline phase; writes ingredients.json");
  CLI::App* run = app.add_subcommand("run", "One closed-loop run");
  CLI::App* campaign = app.add_subcommand("campaign", "Monte-Carlo closed-loop campaign");
  CLI::App* report = app.add_subcommand("report", "Print summary.json of an output directory");
  int run_id = 0;
  for (CLI::App* sub : {collect, synth, run, campaign}) add_common(sub, common);
  run->add_option("--run", run_id, "Run index (selects the random streams)")->check(CLI::NonNegativeNumber);
  campaign->add_option("--threads", common.threads, "Worker threads, 0 for all cores");
  std::string in_dir = "out";
  report->add_option("--in", in_dir, "Directory holding summary.json")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (report->parsed()) {
      std::ifstream f(fs::path(in_dir) / "summary.json");
      if (!f) {
        std::cerr << "no summary.json in " << in_dir << '\n';
        return 2;
      }
      print_summary(nlohmann::json::parse(f));
      return 0;
    }

    const Scenario s = load(common);
    const fs::path out = common.out;
    fs::create_directories(out);
    write_json(out / "scenario.json", to_json(s));

    if (collect->parsed()) {
      std::mt19937_64 rng = make_rng(s.seed, 0, 0);
      Eigen::MatrixXd Kt;
      const DataRecord r = collect_data(s, rng, &Kt);
      std::ofstream f(out / "data.csv");
      write_csv(f, r);
      std::printf("wrote %d samples to %s\n", r.length(), (out / "data.csv").c_str());
      return 0;
    }

    const OfflineArtifacts a = run_offline(s);
    print_offline(s, a);
    write_json(out / "ingredients.json", ingredients_json(a));
    if (synth->parsed()) return 0;

    if (run->parsed()) {
      CampaignResult c;
      c.scenario = s;
      c.runs.push_back(run_closed_loop(s, a, run_id));
      c.runs.back().run_id = run_id;
      c.summary = summarize(s, a, c.runs);
      write_campaign(out, c, a);
      const RunResult& r = c.runs.back();
      if (r.failed) {
        std::fprintf(stderr, "run %d failed at step %d: %s\n", run_id, r.completed, r.error.c_str());
        return 1;
      }
      std::printf("J_cl = %.6f (unscaled %.6f), backup steps %d of %d\n", r.closed_loop_cost(),
                  2 * r.closed_loop_cost(), c.summary.backup_steps, c.summary.total_steps);
      return 0;
    }

    CampaignOptions options;
    options.threads = common.threads;
    const int every = std::max(1, s.samples / 10);
    options.progress = [&](int done) {
      if (done % every == 0 || done == s.samples) std::fprintf(stderr, "%d/%d runs\n", done, s.samples);
    };
    const CampaignResult c = run_campaign(s, a, options);
    write_campaign(out, c, a);
    print_summary(to_json(c.summary));
    return 0;
  } catch (const ControllerInfeasible& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return 1;
  } catch (const SynthesisError& e) {
    std::cerr << "synthesis failed: " << e.what() << '\n';
    return 1;
  } catch (const InsufficientExcitation& e) {
    std::cerr << "insufficient excitation: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "bad argument: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "bad scenario JSON: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
