// SPDX-License-Identifier: Apache-2.0
// resnext: capacity tables, form-equivalence and gradient checks, training.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "resnext/arch.hpp"
#include "resnext/checks.hpp"
#include "resnext/errors.hpp"
#include "resnext/gradcheck.hpp"
#include "resnext/kernels.hpp"
#include "resnext/train.hpp"

using namespace resnext;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kInvalid = 2;

struct Common {
  std::uint64_t seed = 0;
  std::string dtype;  // empty = command default
  std::string isa = "scalar";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "RNG seed");
  cmd->add_option("--dtype", c.dtype, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  cmd->add_option("--isa", c.isa, "scalar (reference), avx2 or auto")->check(CLI::IsMember({"scalar", "reference", "avx2", "auto"}));
}

DType dtype_or(const Common& c, DType fallback) {
  if (c.dtype.empty()) return fallback;
  return c.dtype == "f64" ? DType::F64 : DType::F32;
}

std::string g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void apply_isa(const std::string& name) {
  const auto isa = kernels::parse_isa(name);
  if (!kernels::isa_supported(isa)) throw RejectedInputError("ISA '" + name + "' is not supported on this CPU");
  kernels::set_isa(isa);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aggregated residual blocks: capacity, equivalence checks and training"};
  app.require_subcommand(1);

  // summarize
  Common sum_c;
  ArchConfig sum_arch;
  std::size_t sum_res = 0;
  std::optional<std::size_t> sum_classes;
  auto* sum = app.add_subcommand("summarize", "Per-block parameter and FLOP table as CSV");
  sum->add_option("--arch", sum_arch.family, "Architecture family")
      ->required()
      ->check(CLI::IsMember({"resnet50", "resnext50", "resnet101", "resnext101", "cifar29"}));
  sum->add_option("--cardinality", sum_arch.cardinality)->required();
  sum->add_option("--width", sum_arch.width, "Bottleneck width d of the first stage")->required();
  sum->add_option("--resolution", sum_res, "Input resolution (default 224 or 32)");
  sum->add_option("--classes", sum_classes);
  sum->add_option("--width-divisor", sum_arch.width_divisor, "cifar29 only");
  add_common(sum, sum_c);

  // solve-width
  Common sw_c;
  std::size_t sw_card = 1;
  std::uint64_t sw_ref = kReferenceBlockParams;
  bool sw_verbose = false;
  auto* sw = app.add_subcommand("solve-width", "Bottleneck width matching the reference block capacity");
  sw->add_option("--cardinality", sw_card)->required();
  sw->add_option("--reference-params", sw_ref);
  sw->add_flag("--verbose", sw_verbose, "Also print group width and block parameters");
  add_common(sw, sw_c);

  // equiv-check
  Common eq_c;
  EquivOptions eq;
  std::string eq_bn = "on";
  auto* eqc = app.add_subcommand("equiv-check", "Compare forms a, b and c of one block");
  eqc->add_option("--cardinality", eq.cardinality);
  eqc->add_option("--width", eq.bottleneck_width);
  eqc->add_option("--in-width", eq.in_width);
  eqc->add_option("--out-width", eq.out_width, "Defaults to --in-width");
  eqc->add_option("--stride", eq.stride)->check(CLI::IsMember({1, 2}));
  eqc->add_option("--bn", eq_bn)->check(CLI::IsMember({"on", "off"}));
  eqc->add_option("--size", eq.size, "Input height and width");
  eqc->add_option("--batch", eq.batch);
  add_common(eqc, eq_c);

  // gradcheck
  Common gc_c;
  std::string gc_op = "all";
  GradcheckOptions gc;
  auto* gcc = app.add_subcommand("gradcheck", "Finite-difference gradient check in f64");
  gcc->add_option("--op", gc_op, "Op name or 'all'");
  gcc->add_option("--groups", gc.groups, "conv2d groups");
  gcc->add_option("--stride", gc.stride, "conv2d stride");
  gcc->add_option("--step", gc.step, "Central-difference step");
  add_common(gcc, gc_c);

  // collapse-check
  Common cc_c;
  CollapseOptions cc;
  auto* ccc = app.add_subcommand("collapse-check", "Depth-2 multi-path block against its collapsed wide block");
  ccc->add_option("--cases", cc.cases);
  add_common(ccc, cc_c);

  // train
  Common tr_c;
  std::string tr_config, tr_out;
  auto* tr = app.add_subcommand("train", "Train from a JSON config");
  tr->add_option("--config", tr_config, "JSON config path")->required();
  tr->add_option("--output-dir", tr_out, "Overrides output_dir");
  add_common(tr, tr_c);

  // eval
  Common ev_c;
  std::string ev_ckpt, ev_data;
  std::size_t ev_limit = 0;
  auto* ev = app.add_subcommand("eval", "Top-1 error of a checkpoint on a test split");
  ev->add_option("--checkpoint", ev_ckpt, ".ntc file with its .json sidecar")->required();
  ev->add_option("--data-dir", ev_data, "CIFAR-10 directory; default is the dataset recorded in the sidecar");
  ev->add_option("--test-limit", ev_limit, "With --data-dir: number of test records (0 = all)");
  add_common(ev, ev_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (*sum) {
      apply_isa(sum_c.isa);
      if (sum_classes) sum_arch.classes = *sum_classes;
      else if (sum_arch.family != "cifar29") sum_arch.classes = 1000;
      std::cout << count_capacity(make_arch(sum_arch), sum_res).to_csv();
      return kOk;
    }

    if (*sw) {
      apply_isa(sw_c.isa);
      const auto d = solve_width(sw_card, sw_ref);
      std::cout << "d=" << d << '\n';
      if (sw_verbose)
        std::cout << "group_width=" << sw_card * d << '\n'
                  << "block_params=" << block_capacity(sw_card, d) << '\n'
                  << "reference_params=" << sw_ref << '\n';
      return kOk;
    }

    if (*eqc) {
      apply_isa(eq_c.isa);
      eq.bn = eq_bn == "on";
      eq.seed = eq_c.seed;
      const auto r = dtype_or(eq_c, DType::F64) == DType::F64 ? equiv_check<double>(eq) : equiv_check<float>(eq);
      for (const auto& p : r.pairs) std::cout << "pair=" << p.pair << " max_rel_diff=" << g6(p.max_rel_diff) << '\n';
      std::cout << "tolerance=" << g6(r.tolerance) << ' ' << (r.pass() ? "PASS" : "FAIL") << '\n';
      return r.pass() ? kOk : kCheckFailed;
    }

    if (*gcc) {
      apply_isa(gc_c.isa);
      if (dtype_or(gc_c, DType::F64) != DType::F64) throw InvalidSpecError("gradcheck runs in f64 only");
      gc.seed = gc_c.seed;
      std::vector<GradOp> ops = gc_op == "all" ? all_grad_ops() : std::vector<GradOp>{parse_grad_op(gc_op)};
      bool ok = true;
      for (const auto op : ops) {
        const auto r = gradcheck(op, gc);
        const double tol = gradcheck_tolerance(op);
        const bool pass = r.max_rel_err <= tol;
        ok = ok && pass;
        std::cout << "op=" << r.op << " max_rel_err=" << g6(r.max_rel_err) << " tolerance=" << g6(tol)
                  << " coordinates=" << r.coordinates << " worst=" << r.worst << ' ' << (pass ? "PASS" : "FAIL")
                  << '\n';
      }
      return ok ? kOk : kCheckFailed;
    }

    if (*ccc) {
      apply_isa(cc_c.isa);
      cc.seed = cc_c.seed;
      const auto r =
          dtype_or(cc_c, DType::F64) == DType::F64 ? collapse_check<double>(cc) : collapse_check<float>(cc);
      std::cout << "cases=" << r.cases << " forward_max_rel_diff=" << g6(r.forward_max_rel_diff)
                << " grad_max_rel_diff=" << g6(r.grad_max_rel_diff) << " tolerance=" << g6(r.tolerance) << ' '
                << (r.pass() ? "PASS" : "FAIL") << '\n';
      return r.pass() ? kOk : kCheckFailed;
    }

    if (*tr) {
      apply_isa(tr_c.isa);
      auto config = load_train_config(tr_config);
      if (tr->count("--seed")) config.seed = tr_c.seed;
      config.dtype = dtype_or(tr_c, config.dtype);
      if (!tr_out.empty()) config.output_dir = tr_out;
      const auto out = train_loop(config);
      std::cout << kMetricsHeader << '\n';
      for (const auto& row : out.rows) std::cout << format_metrics_row(row) << '\n';
      if (out.aborted) {
        std::cerr << "training aborted: " << out.abort_reason << " (metrics kept in " << out.metrics_path.string()
                  << ")\n";
        return kCheckFailed;
      }
      std::cout << "final_checkpoint=" << out.final_checkpoint.string() << '\n';
      if (out.best_checkpoint) std::cout << "best_checkpoint=" << out.best_checkpoint->string() << '\n';
      return kOk;
    }

    if (*ev) {
      apply_isa(ev_c.isa);
      std::optional<DatasetConfig> data;
      if (!ev_data.empty()) {
        data.emplace();
        data->kind = "cifar10";
        data->path = ev_data;
        data->test_limit = ev_limit;
      }
      std::optional<DType> dtype;
      if (!ev_c.dtype.empty()) dtype = dtype_or(ev_c, DType::F32);
      const auto r = evaluate_checkpoint(ev_ckpt, data, dtype);
      std::cout << "top1_error=" << g6(r.top1_error) << " loss=" << g6(r.loss) << '\n';
      return kOk;
    }
  } catch (const NonFiniteError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckFailed;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kInvalid;
}
