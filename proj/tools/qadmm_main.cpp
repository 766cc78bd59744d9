// Command-line front end: data generation, fitting, benchmark replication and
// convergence diagnostics. Exit codes: 0 success/converged, 2 iteration limit
// reached, 3 diverged, 4 usage or input error.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "qadmm/bench.hpp"
#include "qadmm/diagnostics.hpp"
#include "qadmm/metrics.hpp"
#include "qadmm/nonconvex.hpp"
#include "qadmm/select.hpp"
#include "qadmm/solvers.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitMaxIter = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitUsage = 4;

struct GenerateArgs {
  long n = 2000;
  long p = 100;
  std::uint64_t seed = 1;
  double rho = 0.5;
  std::string task = "regression";
  std::string out = "dataset";
};

int cmd_generate(const GenerateArgs& args) {
  using nlohmann::json;
  json truth;
  truth["n"] = args.n;
  truth["p"] = args.p;
  truth["seed"] = args.seed;
  truth["rho"] = args.rho;
  truth["task"] = args.task;
  std::vector<long> support;
  for (qadmm::Index j : qadmm::synth_support()) support.push_back(static_cast<long>(j) + 1);
  truth["support_1based"] = support;
  truth["hetero_index_1based"] = static_cast<long>(qadmm::kSynthHeteroIndex) + 1;

  qadmm::SynthSpec spec{args.n, args.p, args.seed, args.rho};
  std::string data_path;
  if (args.task == "regression") {
    qadmm::Dataset data = qadmm::synth_generate(spec);
    data_path = args.out + ".csv";
    std::ofstream out(data_path);
    if (!out) throw qadmm::DataError("cannot write " + data_path);
    qadmm::write_csv(out, data);
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(qadmm::fingerprint(data)));
    truth["fingerprint"] = hex;
    truth["model"] = "y = x6 + x12 + x15 + x20 + 0.7 * x1 * eps";
  } else if (args.task == "classification") {
    qadmm::ClassificationToy toy = qadmm::synth_classification(spec);
    data_path = args.out + ".libsvm";
    std::ofstream out(data_path);
    if (!out) throw qadmm::DataError("cannot write " + data_path);
    qadmm::write_libsvm(out, toy.raw_features, toy.labels);
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(qadmm::fingerprint(toy.data)));
    truth["fingerprint"] = hex;
    truth["model"] = "label = sign(x6 + x12 + x15 + x20), margin >= 0.2";
  } else {
    throw qadmm::ParamError("unknown task '" + args.task + "'");
  }
  const std::string truth_path = args.out + ".truth.json";
  std::ofstream tout(truth_path);
  if (!tout) throw qadmm::DataError("cannot write " + truth_path);
  tout << truth.dump(2) << "\n";
  std::cout << "wrote " << data_path << " and " << truth_path << "\n";
  return kExitOk;
}

struct FitArgs {
  std::string data_path;
  std::string format = "auto";  // auto | csv | libsvm
  bool header = true;
  std::string task = "regression";
  std::string variant = "m-slack-gb";
  double tau = 0.5;
  double mu = 1.0;
  double nu = 0.75;
  int blocks = 1;
  std::string penalty = "l1";
  double lambda = 0.1;
  double a = 0.0;  // 0: penalty default
  double tol = 1e-4;
  int max_iter = 500;
  std::uint64_t seed = 0;
  bool shuffle = false;
  bool add_intercept = false;
  bool parallel_blocks = false;
  long p_override = 0;
  std::string out = "fit.json";
  std::string trace_path;
};

qadmm::Dataset load_dataset(const FitArgs& args, qadmm::Vector* labels_out) {
  std::string format = args.format;
  if (format == "auto") {
    const std::string& p = args.data_path;
    const bool libsvm = p.find(".libsvm") != std::string::npos ||
                        p.find(".svm") != std::string::npos;
    format = libsvm ? "libsvm" : "csv";
  }
  qadmm::Dataset data;
  if (format == "libsvm") {
    qadmm::LibsvmResult r = qadmm::parse_libsvm_file(args.data_path, args.p_override);
    if (labels_out) *labels_out = r.labels;
    data = std::move(r.data);
  } else if (format == "csv") {
    data = qadmm::parse_csv_file(args.data_path, args.header);
    if (args.task == "classification") {
      // last column held the +-1 labels; apply the ingestion transform
      qadmm::Vector labels = data.response;
      if (labels_out) *labels_out = labels;
      data = qadmm::classification_ingest(std::move(data.features), labels);
    }
  } else {
    throw qadmm::ParamError("unknown format '" + format + "'");
  }
  if (args.add_intercept) {
    qadmm::Matrix with_ones(data.n(), data.p() + 1);
    with_ones.col(0) = qadmm::Vector::Ones(data.n());
    with_ones.rightCols(data.p()) = data.features;
    if (data.task == qadmm::Task::Classification && labels_out)
      for (qadmm::Index i = 0; i < data.n(); ++i) with_ones(i, 0) = (*labels_out)[i];
    data.features = std::move(with_ones);
    data.has_intercept = true;
  }
  return data;
}

int cmd_fit(const FitArgs& args) {
  using nlohmann::json;
  qadmm::Vector labels;
  qadmm::Dataset data = load_dataset(args, &labels);
  if (args.shuffle) data = qadmm::shuffle_rows(data, args.seed);

  qadmm::SolverConfig cfg;
  cfg.variant = qadmm::variant_from_string(args.variant);
  cfg.tau = args.tau;
  cfg.mu = args.mu;
  cfg.nu = args.nu;
  cfg.blocks = args.blocks;
  cfg.tol = args.tol;
  cfg.max_iter = args.max_iter;
  cfg.seed = args.seed;
  cfg.parallel_blocks = args.parallel_blocks;
  cfg.validate(data.task);

  const qadmm::Vector w =
      qadmm::PenaltySpec::broadcast(args.lambda, data.p(), data.has_intercept);
  qadmm::FitResult fit;
  qadmm::PenaltySpec pen = qadmm::PenaltySpec::weighted_l1(w);
  if (args.penalty == "l1") {
    fit = qadmm::solve(data, pen, cfg);
  } else if (args.penalty == "scad" || args.penalty == "mcp") {
    pen = args.penalty == "scad"
              ? qadmm::PenaltySpec::scad(w, args.a > 0 ? args.a : 3.7)
              : qadmm::PenaltySpec::mcp(w, args.a > 0 ? args.a : 3.0);
    qadmm::LLAConfig lla;
    lla.inner = cfg;
    fit = qadmm::lla_solve(data, pen, lla);
  } else {
    throw qadmm::ParamError("unknown penalty '" + args.penalty + "'");
  }

  json j;
  j["variant"] = args.variant;
  j["penalty"] = args.penalty;
  j["lambda"] = args.lambda;
  j["tau"] = args.tau;
  j["mu"] = args.mu;
  j["nu"] = args.nu;
  j["M"] = args.blocks;
  j["seed"] = args.seed;
  j["iterations"] = fit.iterations;
  j["outer_steps"] = fit.outer_steps;
  j["converged"] = fit.converged;
  j["seconds"] = fit.seconds;
  j["objective"] = qadmm::objective(data, fit.beta, args.tau, pen);
  std::vector<double> beta(fit.beta.data(), fit.beta.data() + fit.beta.size());
  j["beta"] = beta;
  std::vector<double> history;
  for (const qadmm::TraceRow& row : fit.trace) history.push_back(row.rel_change);
  j["stopping_statistic"] = history;
  const qadmm::SupportMetrics sm = qadmm::support_metrics(fit.beta, data.p());
  j["nonzero"] = sm.nonzero;
  j["sparsity"] = sm.sparsity;
  if (data.task == qadmm::Task::Classification && labels.size() == data.n()) {
    const qadmm::Matrix raw = qadmm::untransform_features(data, labels);
    j["train_accuracy"] = qadmm::classification_accuracy(fit.beta, raw, labels);
  }

  std::ofstream out(args.out);
  if (!out) throw qadmm::DataError("cannot write " + args.out);
  out << j.dump(2) << "\n";
  if (!args.trace_path.empty()) {
    std::ofstream tr(args.trace_path);
    if (!tr) throw qadmm::DataError("cannot write " + args.trace_path);
    qadmm::write_trace(tr, fit.trace);
  }
  std::cout << (fit.converged ? "converged" : "iteration limit reached") << " after "
            << fit.iterations << " iterations\n";
  return fit.converged ? kExitOk : kExitMaxIter;
}

struct BenchArgs {
  std::string config_path;
  std::string out = "bench";
};

int cmd_bench(const BenchArgs& args) {
  std::ifstream in(args.config_path);
  if (!in) throw qadmm::DataError("cannot open " + args.config_path);
  nlohmann::json jcfg = nlohmann::json::parse(in);
  qadmm::BenchSpec spec = qadmm::BenchSpec::from_json(jcfg);
  qadmm::BenchResult result = qadmm::run_bench(spec);

  const std::string csv_path = args.out + ".csv";
  const std::string timing_path = args.out + "_timing.csv";
  const std::string manifest_path = args.out + "_manifest.json";
  {
    std::ofstream out(csv_path);
    if (!out) throw qadmm::DataError("cannot write " + csv_path);
    qadmm::write_bench_csv(out, result);
  }
  {
    std::ofstream out(timing_path);
    qadmm::write_bench_timing_csv(out, result);
  }
  {
    std::ofstream out(manifest_path);
    out << qadmm::manifest_json(spec, result).dump(2) << "\n";
  }
  std::cout << "wrote " << csv_path << ", " << timing_path << " and " << manifest_path
            << "\n";
  return kExitOk;
}

struct DiagnoseArgs {
  int blocks = 2;
  long p = 3;
  long nm = 5;
  double nu = 0.75;
  double mu = 1.0;
  double tau = 0.7;
  double lambda = 0.1;
  int iterations = 60;
  std::uint64_t seed = 5;
  std::string ordering = "both";  // standard | modified | both
  bool break_correction = false;
  std::string trace_out;  // columnar trace with the h-norm column filled
};

bool diagnose_ordering(const DiagnoseArgs& args, qadmm::Ordering ord) {
  using namespace qadmm;
  const Index n = static_cast<Index>(args.blocks) * args.nm;
  std::mt19937_64 rng(args.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset data;
  data.features.resize(n, args.p);
  data.response.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < args.p; ++j) data.features(i, j) = g(rng);
    data.response[i] = g(rng);
  }
  Partition part = partition(n, args.blocks);
  ConstraintSystem cs = build_constraints(data, part, ord);
  GBMatrices gb = build_gb_matrices(cs, args.mu, args.nu);
  const char* tag = ord == Ordering::Standard ? "standard" : "modified";
  bool all_pass = true;
  auto report = [&](const std::string& what, bool pass, const std::string& detail) {
    std::cout << (pass ? "PASS" : "FAIL") << " [" << tag << "] " << what;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    all_pass = all_pass && pass;
  };
  char buf[64];

  const double id1 = (gb.H * gb.M - gb.Q).cwiseAbs().maxCoeff();
  std::snprintf(buf, sizeof buf, "max |HM - Q| = %.2e", id1);
  report("HM = Q", id1 <= 1e-12, buf);
  const double id2 =
      (gb.G - ((gb.Q.transpose() + gb.Q) - gb.M.transpose() * gb.H * gb.M)).cwiseAbs().maxCoeff();
  std::snprintf(buf, sizeof buf, "max residual = %.2e", id2);
  report("G = (Q' + Q) - M'HM", id2 <= 1e-12, buf);

  const double lh =
      Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (gb.H + gb.H.transpose())).eigenvalues().minCoeff();
  const double lg =
      Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (gb.G + gb.G.transpose())).eigenvalues().minCoeff();
  std::snprintf(buf, sizeof buf, "min eig H = %.2e, G = %.2e", lh, lg);
  report("H, G positive definite", lh > 0.0 && lg > 0.0, buf);

  SolverConfig cfg;
  cfg.variant = ord == Ordering::Standard ? SolverVariant::QPADMSlackGB
                                          : SolverVariant::MQPADMSlackGB;
  cfg.blocks = args.blocks;
  cfg.tau = args.tau;
  cfg.mu = args.mu;
  cfg.nu = args.nu;
  cfg.max_iter = args.iterations;
  cfg.tol = 1e-300;
  cfg.record_iterates = true;
  cfg.break_correction = args.break_correction;
  const Vector weights = PenaltySpec::broadcast(args.lambda, args.p, false);
  AdmmSolver solver(data, cfg);
  FitResult fit = solver.fit(weights);

  std::vector<Vector> gs;
  for (const IterateSnapshot& snap : fit.iterates) gs.push_back(pack_iterate(cs, snap).g());
  HNormTrace tr = h_norm_trace(gs, gb, gs.back());
  for (size_t k = 0; k < fit.trace.size() && k < tr.step.size(); ++k)
    fit.trace[k].h_norm = tr.step[k];
  if (!args.trace_out.empty()) {
    const std::string path = args.trace_out + "." + tag + ".csv";
    std::ofstream out(path);
    if (!out) throw qadmm::DataError("cannot write " + path);
    write_trace(out, fit.trace);
  }
  double step_viol = 0.0, limit_viol = 0.0;
  for (size_t k = 0; k + 1 < tr.step.size(); ++k)
    step_viol = std::max(step_viol, tr.step[k + 1] - tr.step[k]);
  for (size_t k = 0; k + 2 < tr.to_limit.size(); ++k)  // last entry is the proxy itself
    limit_viol = std::max(limit_viol, tr.to_limit[k + 1] - tr.to_limit[k]);
  std::snprintf(buf, sizeof buf, "max increase = %.2e", step_viol);
  report("||g^k - g^{k+1}||_H nonincreasing", step_viol <= 1e-10, buf);
  std::snprintf(buf, sizeof buf, "max increase = %.2e", limit_viol);
  report("||g^k - g^inf||_H nonincreasing", limit_viol <= 1e-8, buf);

  // rate witness: k * ||g^k - g^{k+1}||_H^2 should stay bounded
  double witness = 0.0;
  for (size_t k = 0; k < tr.step.size(); ++k)
    witness = std::max(witness, static_cast<double>(k + 1) * tr.step[k] * tr.step[k]);
  const double denom = tr.to_limit.front() * tr.to_limit.front();
  std::snprintf(buf, sizeof buf, "max k*step^2 / ||g0-ginf||^2 = %.3f",
                witness / std::max(denom, 1e-300));
  std::cout << "INFO [" << tag << "] o(1/k) rate witness " << buf << "\n";

  if (!args.break_correction) {
    PCState state = pc_initial_state(cs, cfg.init_value);
    double worst = 0.0;
    for (size_t k = 1; k < fit.iterates.size(); ++k) {
      state = prediction_correction_step(state, cs, gb, weights, cfg.tau, cfg.mu);
      PackedIterate ours = pack_iterate(cs, fit.iterates[k]);
      worst = std::max({worst, (state.b - ours.b).cwiseAbs().maxCoeff(),
                        (state.c - ours.c).cwiseAbs().maxCoeff(),
                        (state.d - ours.d).cwiseAbs().maxCoeff()});
    }
    std::snprintf(buf, sizeof buf, "max gap = %.2e", worst);
    report("prediction-correction equivalence", worst <= 1e-12, buf);
  }
  return all_pass;
}

int cmd_diagnose(const DiagnoseArgs& args) {
  bool pass = true;
  if (args.ordering == "standard" || args.ordering == "both")
    pass = diagnose_ordering(args, qadmm::Ordering::Standard) && pass;
  if (args.ordering == "modified" || args.ordering == "both")
    pass = diagnose_ordering(args, qadmm::Ordering::Modified) && pass;
  if (args.ordering != "standard" && args.ordering != "modified" && args.ordering != "both")
    throw qadmm::ParamError("unknown ordering '" + args.ordering + "'");
  std::cout << (pass ? "all diagnostics passed" : "diagnostics failed") << "\n";
  return pass ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel ADMM for penalized quantile regression and classification"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate", "write a synthetic dataset");
  generate->add_option("--n", gen.n, "rows");
  generate->add_option("--p", gen.p, "columns (>= 20)");
  generate->add_option("--seed", gen.seed, "rng seed");
  generate->add_option("--rho", gen.rho, "latent AR(1) correlation");
  generate->add_option("--task", gen.task, "regression | classification");
  generate->add_option("--out", gen.out, "output path prefix");

  FitArgs fit;
  CLI::App* fitc = app.add_subcommand("fit", "fit one model");
  fitc->add_option("--data", fit.data_path, "input dataset")->required();
  fitc->add_option("--format", fit.format, "auto | csv | libsvm");
  fitc->add_flag("--header,!--no-header", fit.header, "csv header row present");
  fitc->add_option("--task", fit.task, "regression | classification (csv input)");
  fitc->add_option("--variant", fit.variant, "qpadm | slack | slack-gb | m-slack-gb");
  fitc->add_option("--tau", fit.tau, "quantile level in (0,1]");
  fitc->add_option("--mu", fit.mu, "augmented parameter");
  fitc->add_option("--nu", fit.nu, "correction step in (0,1)");
  fitc->add_option("--M", fit.blocks, "number of data blocks");
  fitc->add_option("--penalty", fit.penalty, "l1 | scad | mcp");
  fitc->add_option("--lambda", fit.lambda, "penalty level (broadcast)");
  fitc->add_option("--a", fit.a, "concavity (scad/mcp)");
  fitc->add_option("--tol", fit.tol, "stopping tolerance");
  fitc->add_option("--max-iter", fit.max_iter, "iteration cap");
  fitc->add_option("--seed", fit.seed, "seed for --shuffle");
  fitc->add_flag("--shuffle", fit.shuffle, "shuffle rows before splitting");
  fitc->add_flag("--add-intercept", fit.add_intercept, "prepend an all-ones column");
  fitc->add_flag("--parallel-blocks", fit.parallel_blocks, "update blocks on threads");
  fitc->add_option("--p-override", fit.p_override, "libsvm dimension override");
  fitc->add_option("--out", fit.out, "result json path");
  fitc->add_option("--trace", fit.trace_path, "iteration trace csv path");

  BenchArgs bench;
  CLI::App* benchc = app.add_subcommand("bench", "replication benchmark from a json config");
  benchc->add_option("--config", bench.config_path, "experiment descriptor")->required();
  benchc->add_option("--out", bench.out, "output path prefix");

  DiagnoseArgs diag;
  CLI::App* diagc = app.add_subcommand("diagnose", "verify the convergence machinery");
  diagc->add_option("--M", diag.blocks, "blocks");
  diagc->add_option("--p", diag.p, "columns");
  diagc->add_option("--nm", diag.nm, "rows per block");
  diagc->add_option("--nu", diag.nu, "correction step in (0,1)");
  diagc->add_option("--mu", diag.mu, "augmented parameter");
  diagc->add_option("--tau", diag.tau, "quantile level");
  diagc->add_option("--lambda", diag.lambda, "penalty level");
  diagc->add_option("--iters", diag.iterations, "recorded iterations");
  diagc->add_option("--seed", diag.seed, "rng seed");
  diagc->add_option("--ordering", diag.ordering, "standard | modified | both");
  diagc->add_flag("--break-correction", diag.break_correction,
                  "negative control: mis-signed correction");
  diagc->add_option("--trace-out", diag.trace_out,
                    "dump the iteration trace with the h-norm column filled");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*generate) return cmd_generate(gen);
    if (*fitc) return cmd_fit(fit);
    if (*benchc) return cmd_bench(bench);
    if (*diagc) return cmd_diagnose(diag);
  } catch (const qadmm::DivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const qadmm::ParamError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
