"""Command line interface.

Every subcommand accepts ``--config FILE`` (JSON, or YAML by extension; the
``MARLVM_CONFIG`` environment variable supplies a default). Config values
act as defaults and explicit flags override them. A config may hold a
section per command group (``{"dml": {...}, "bounds": {...}}``) or a flat
mapping. Exit status: 0 on success, 1 on runtime failure, 2 on usage errors.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import fields

import numpy as np

from marlvm import bounds as bnd
from marlvm.dml import DmlConfig, train_mar_dml, transform
from marlvm.errors import InvalidArgumentError, MarError
from marlvm.harness import io as fio
from marlvm.harness.metrics import (
    average_precision_pairs,
    clustering_accuracy,
    kmeans,
    knn_accuracy,
    nmi,
    precision_at_k,
)
from marlvm.harness.synth import synth_longtail
from marlvm.harness.verify import run_verify
from marlvm.linalg import gram_det, pairwise_angles
from marlvm.nn import MlpParams, NnConfig, accuracy, measure_hidden_diversity, train_nn
from marlvm.optimizer import OptimizerConfig, ZeroLoss, optimize
from marlvm.rbm import RbmConfig, RsmParams, hidden_probs, mean_hidden_angle, perplexity, top_words, train_mar_rbm
from marlvm.regularizer import SurrogateConfig, mar_breakdown, surrogate, surrogate_gradient

CONFIG_ENV = "MARLVM_CONFIG"

log = logging.getLogger("marlvm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        text = fh.read()
    if path.endswith((".yaml", ".yml")):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text) if text.strip() else {}
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"{path}: config must be a mapping")
    return data


class Options:
    """Flag values falling back to config values, then to built-in defaults."""

    def __init__(self, args, config):
        self.args = args
        self.config = config

    def get(self, name, default=None):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        return self.config.get(name, default)


# ---------------------------------------------------------------- output


def emit(report, fmt):
    sys.stdout.write(fio.format_metrics(report, fmt))


def emit_table(rows, fmt):
    if fmt == "json":
        sys.stdout.write(json.dumps(rows, indent=2) + "\n")
        return
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    sys.stdout.write(buf.getvalue())


def _run_meta(opts, extra=None):
    meta = {"seed": opts.args.seed}
    cfg = dict(opts.config)
    cfg.update({k: v for k, v in vars(opts.args).items() if v is not None and k != "func"})
    meta["config_hash"] = fio.config_hash(cfg)
    meta.update(extra or {})
    return meta


def _angles_into(report, M):
    if M.shape[0] >= 2:
        angles = pairwise_angles(M)
        report.add("mean_angle", float(np.mean(angles)))
        report.add("min_angle", float(np.min(angles)))


def _load_matrix(path):
    if path.endswith(".json"):
        _, arrays, _ = fio.load_model(path)
        if "A" not in arrays:
            raise InvalidArgumentError(f"{path}: model file has no array 'A'")
        return arrays["A"]
    try:
        return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))
    except ValueError as exc:
        raise InvalidArgumentError(f"{path}: {exc}") from None


def _model(path, kind):
    got, arrays, meta = fio.load_model(path)
    if got != kind:
        raise InvalidArgumentError(f"{path}: expected a {kind} model, found {got}")
    return arrays, meta


# ---------------------------------------------------------------- reg / opt


def cmd_reg_eval(opts):
    A = _load_matrix(opts.get("matrix"))
    gamma = float(opts.get("gamma", 1.0))
    b = mar_breakdown(A, gamma)
    report = fio.MetricsReport(meta=_run_meta(opts))
    report.add("mean_angle", b.mean_angle)
    report.add("angle_variance", b.angle_variance)
    report.add("omega", b.omega)
    report.add("gamma", gamma)
    U = A / np.linalg.norm(A, axis=1, keepdims=True)
    report.add("gram_det", gram_det(U))
    if U.shape[0] <= U.shape[1] and gram_det(U) > 0:
        report.add("surrogate", surrogate(U, gamma))
    emit(report, opts.args.format)


def cmd_reg_grad(opts):
    A = _load_matrix(opts.get("matrix"))
    U = A / np.linalg.norm(A, axis=1, keepdims=True)
    cfg = SurrogateConfig(float(opts.get("gamma", 1.0)), float(opts.get("det_clamp", 1e-6)))
    G = surrogate_gradient(U, cfg)
    out = opts.get("out")
    text = fio.dumps_model("surrogate-gradient", {"A": U, "G": G}, {"gamma": cfg.gamma, "det_clamp": cfg.det_clamp})
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _optimizer_config(opts, lam=0.0, gamma=1.0):
    return OptimizerConfig(
        lam=lam, gamma=gamma, seed=opts.args.seed,
        outer_iters=int(opts.get("outer_iters", 100)),
        inner_g_iters=int(opts.get("inner_iters", 50)),
        inner_a_iters=int(opts.get("inner_iters", 50)),
    )


def cmd_opt_run(opts):
    K, D = int(opts.get("K", 3)), int(opts.get("D", 3))
    rng = np.random.default_rng(opts.args.seed)
    A0 = rng.uniform(-0.1, 0.1, size=(K, D))
    res = optimize(ZeroLoss(), A0, _optimizer_config(opts, float(opts.get("lam", 1.0)), float(opts.get("gamma", 1.0))))
    report = fio.MetricsReport(meta=_run_meta(opts, {"converged": res.converged}))
    _angles_into(report, res.A)
    if res.trace:
        report.add("objective", res.trace[-1])
    report.add("iterations", len(res.trace))
    if opts.get("out"):
        fio.save_model(opts.get("out"), "components", {"A": res.A})
    emit(report, opts.args.format)


# ---------------------------------------------------------------- dml


def cmd_dml_train(opts):
    data = fio.load_dense_csv(opts.get("data"))
    lam, gamma = float(opts.get("lam", 0.0)), float(opts.get("gamma", 1.0))
    cfg = DmlConfig(K=int(opts.get("K", 10)), lam=lam, gamma=gamma,
                    hinge_weight=float(opts.get("hinge_weight", 1.0)), margin=float(opts.get("margin", 1.0)),
                    optimizer=_optimizer_config(opts, lam, gamma))
    pairs = int(opts.get("pairs", 1000))
    A = train_mar_dml(data.X, data.labels, cfg, n_similar=pairs, n_dissimilar=pairs, seed=opts.args.seed)
    fio.save_model(opts.get("out"), "dml", {"A": A}, {"lam": lam, "gamma": gamma, "seed": opts.args.seed})
    report = fio.MetricsReport(meta=_run_meta(opts))
    _angles_into(report, A)
    emit(report, opts.args.format)


def _all_pair_ap(Z, labels):
    i, j = np.triu_indices(len(labels), 1)
    return average_precision_pairs(np.sum((Z[i] - Z[j]) ** 2, axis=1), (labels[i] == labels[j]).astype(int))


def cmd_dml_eval(opts):
    arrays, _ = _model(opts.get("model"), "dml")
    A = arrays["A"]
    data = fio.load_dense_csv(opts.get("data"))
    Z = transform(A, data.X)
    y = data.labels
    k = int(opts.get("k", 10))
    report = fio.MetricsReport(meta=_run_meta(opts))
    report.add("average_precision", _all_pair_ap(Z, y))
    report.add("precision_at_k", precision_at_k(Z, Z, y, y, min(k, len(y) - 1), exclude_self=True))
    n_classes = len(np.unique(y))
    pred = kmeans(Z, n_classes, seed=opts.args.seed)
    report.add("clustering_accuracy", clustering_accuracy(pred, y))
    report.add("nmi", nmi(pred, y))
    half = len(y) // 2
    if half >= 3:
        report.add("knn_accuracy", knn_accuracy(Z[:half], y[:half], Z[half:], y[half:], k=3))
    _angles_into(report, A)
    emit(report, opts.args.format)


# ---------------------------------------------------------------- rbm


def _rbm_params(path):
    arrays, meta = _model(path, "rbm")
    return RsmParams(arrays["W"], arrays["vis_bias"], arrays["hid_bias"]), meta


def cmd_rbm_train(opts):
    batch = fio.load_sparse_docs(opts.get("docs"), opts.get("vocab"))
    cfg = RbmConfig(lam=float(opts.get("lam", 0.0)), gamma=float(opts.get("gamma", 1.0)),
                    lr=float(opts.get("lr", 1e-4)), minibatch=int(opts.get("minibatch", 100)),
                    epochs=int(opts.get("epochs", 10)), seed=opts.args.seed)
    params = train_mar_rbm(batch, int(opts.get("K", 10)), cfg)
    fio.save_model(opts.get("out"), "rbm", {"W": params.W, "vis_bias": params.vis_bias, "hid_bias": params.hid_bias},
                   {"lam": cfg.lam, "gamma": cfg.gamma, "seed": cfg.seed})
    report = fio.MetricsReport(meta=_run_meta(opts))
    if params.K >= 2:
        report.add("mean_angle", mean_hidden_angle(params))
    emit(report, opts.args.format)


def cmd_rbm_eval(opts):
    params, _ = _rbm_params(opts.get("model"))
    batch = fio.load_sparse_docs(opts.get("docs"), params.J)
    report = fio.MetricsReport(meta=_run_meta(opts))
    if params.K >= 2:
        report.add("mean_angle", mean_hidden_angle(params))
    labelled = batch.labels >= 0
    if labelled.sum() >= 2:
        sub = batch.subset(np.flatnonzero(labelled))
        Z = hidden_probs(sub.counts, sub.lengths, params)
        k = min(int(opts.get("k", 10)), len(sub) - 1)
        report.add("precision_at_k", precision_at_k(Z, Z, sub.labels, sub.labels, k, exclude_self=True))
    if not opts.get("no_perplexity", False):
        report.add("perplexity", perplexity(batch, params))
    emit(report, opts.args.format)


def cmd_rbm_topics(opts):
    params, _ = _rbm_params(opts.get("model"))
    top = top_words(params, min(int(opts.get("top", 10)), params.J))
    emit_table([{"unit": k, "words": " ".join(map(str, row))} for k, row in enumerate(top)], opts.args.format)


# ---------------------------------------------------------------- nn


def _nn_config(opts, lam=None):
    return NnConfig(m=int(opts.get("m", 8)), lam=float(opts.get("lam", 0.0) if lam is None else lam),
                    gamma=float(opts.get("gamma", 1.0)), lr=float(opts.get("lr", 0.5)),
                    minibatch=int(opts.get("minibatch", 100)), epochs=int(opts.get("epochs", 100)),
                    seed=opts.args.seed)


def cmd_nn_train(opts):
    data = fio.load_dense_csv(opts.get("data"))
    cfg = _nn_config(opts)
    params, trace = train_nn(data.X, data.labels, cfg)
    fio.save_model(opts.get("out"), "nn", dict(zip(("hidden_W", "hidden_b", "out_W", "out_b"), params.arrays())),
                   {"lam": cfg.lam, "gamma": cfg.gamma, "seed": cfg.seed})
    report = fio.MetricsReport(meta=_run_meta(opts))
    report.add("accuracy", accuracy(params, data.X, data.labels))
    if trace:
        report.add("train_loss", trace[-1])
    _angles_into(report, params.hidden_W)
    emit(report, opts.args.format)


def cmd_nn_eval(opts):
    arrays, _ = _model(opts.get("model"), "nn")
    params = MlpParams(arrays["hidden_W"], arrays["hidden_b"], arrays["out_W"], arrays["out_b"])
    data = fio.load_dense_csv(opts.get("data"))
    report = fio.MetricsReport(meta=_run_meta(opts))
    report.add("accuracy", accuracy(params, data.X, data.labels))
    if params.m >= 2:
        div = measure_hidden_diversity(params, float(opts.get("gamma", 1.0)))
        report.add("mean_angle", div.mu)
        report.add("min_angle", div.min_angle)
        report.add("angle_variance", div.sigma)
    emit(report, opts.args.format)


def cmd_nn_sweep(opts):
    data = fio.load_dense_csv(opts.get("data"))
    lams = _float_list(opts.get("lams", "0,0.01,0.1,1,10"))
    frac = float(opts.get("heldout", 0.5))
    n_train = int(round(len(data) * (1 - frac)))
    if not 0 < n_train < len(data):
        raise InvalidArgumentError("heldout fraction leaves an empty split")
    X, y = data.X, data.labels
    c = int(y.max() + 1)
    rows = []
    for lam in lams:
        params, _ = train_nn(X[:n_train], y[:n_train], _nn_config(opts, lam), n_classes=c)
        rows.append({"lam": lam, "heldout_accuracy": accuracy(params, X[n_train:], y[n_train:])})
    emit_table(rows, opts.args.format)


# ---------------------------------------------------------------- bounds


def _float_list(spec):
    if isinstance(spec, (list, tuple)):
        return [float(v) for v in spec]
    spec = str(spec).strip()
    if not spec:
        return []
    if ":" in spec:
        start, stop, step = (float(v) for v in spec.split(":"))
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    return [float(v) for v in spec.split(",")]


def _bound_inputs(opts):
    kw = {}
    for f in fields(bnd.BoundInputs):
        value = opts.get(f.name)
        if value is not None:
            kw[f.name] = value
    return bnd.BoundInputs(**kw)


def cmd_bounds_eval(opts):
    inputs = _bound_inputs(opts)
    report = fio.MetricsReport(meta=_run_meta(opts))
    report.add("J", bnd.j_single(inputs))
    for name, fn in bnd.ESTIMATORS.items():
        bound, prob = fn(inputs)
        report.add(f"estimation_{name}", bound)
        report.add(f"estimation_{name}_probability", prob)
    lip, loss_bound = bnd.cross_entropy_constants(inputs)
    report.add("cross_entropy_lipschitz", lip)
    report.add("cross_entropy_loss_bound", loss_bound)
    app, feasible = bnd.approximation_bound(inputs)
    report.add("approximation", app)
    report.add("approximation_feasible", float(feasible))
    if inputs.gamma_moments is not None:
        mu, sigma = inputs.gamma_moments
        report.add("theta_from_moments", bnd.theta_lower_bound(mu, sigma, inputs.tau))
    emit(report, opts.args.format)


def cmd_bounds_scan(opts):
    inputs = _bound_inputs(opts)
    grid = _float_list(opts.get("grid", "0.1:1.5:0.1"))
    table = bnd.tradeoff_scan(inputs, grid, opts.get("loss", "squared"))
    best = table.best_index()
    rows = table.as_dicts()
    for i, row in enumerate(rows):
        row["best"] = i == best
    emit_table(rows, opts.args.format)


# ---------------------------------------------------------------- synth / verify


def cmd_synth(opts):
    mode = opts.get("mode", "features")
    out = opts.get("out")
    data = synth_longtail(int(opts.get("topics", 10)), float(opts.get("exponent", 1.5)), int(opts.get("n", 1000)),
                          int(opts.get("dim", 20)), mode=mode, seed=opts.args.seed,
                          doc_length=int(opts.get("doc_length", 20)))
    if mode == "docs":
        fio.save_sparse_docs(out, data)
    else:
        fio.save_dense_csv(out, data)
    sizes = np.bincount(data.labels)
    report = fio.MetricsReport(meta=_run_meta(opts))
    report.add("items", len(data.labels))
    report.add("largest_class", int(sizes.max()))
    report.add("smallest_class", int(sizes.min()))
    emit(report, opts.args.format)


def cmd_verify(opts):
    report = run_verify(opts.args.seed, int(opts.get("trials", 100)))
    emit(report, opts.args.format)
    return 1 if report.meta["failed"] else 0


# ---------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--config", default=None, help=f"JSON/YAML config (default: ${CONFIG_ENV})")

    p = _Parser(prog="marlvm", description="Mutual angular regularization toolkit.")
    groups = p.add_subparsers(dest="group", parser_class=_Parser)

    def leaf(sub, name, func, help_text):
        q = sub.add_parser(name, parents=[common], help=help_text)
        q.set_defaults(func=func)
        return q

    def num(q, *names, kind=float):
        for n in names:
            q.add_argument(f"--{n.replace('_', '-')}", dest=n, type=kind, default=None)

    reg = groups.add_parser("reg", help="regularizer and surrogate").add_subparsers(dest="action", parser_class=_Parser)
    for name, func in (("eval", cmd_reg_eval), ("grad", cmd_reg_grad)):
        q = leaf(reg, name, func, f"{name} on a component matrix")
        q.add_argument("--matrix", help="model file (.json, array 'A') or numeric CSV")
        num(q, "gamma", "det_clamp")
        q.add_argument("--out")

    opt = groups.add_parser("opt", help="alternating optimizer").add_subparsers(dest="action", parser_class=_Parser)
    q = leaf(opt, "run", cmd_opt_run, "pure-regularizer optimization from a random start")
    num(q, "K", "D", "outer_iters", "inner_iters", kind=int)
    num(q, "lam", "gamma")
    q.add_argument("--out")

    dml = groups.add_parser("dml", help="metric learning").add_subparsers(dest="action", parser_class=_Parser)
    q = leaf(dml, "train", cmd_dml_train, "train on a dense CSV")
    q.add_argument("--data")
    q.add_argument("--out")
    num(q, "K", "pairs", "outer_iters", "inner_iters", kind=int)
    num(q, "lam", "gamma", "hinge_weight", "margin")
    q = leaf(dml, "eval", cmd_dml_eval, "retrieval, pair AP, clustering and k-NN metrics")
    q.add_argument("--model")
    q.add_argument("--data")
    num(q, "k", kind=int)

    rbm = groups.add_parser("rbm", help="replicated-softmax RBM").add_subparsers(dest="action", parser_class=_Parser)
    q = leaf(rbm, "train", cmd_rbm_train, "CD-1 training on sparse documents")
    q.add_argument("--docs")
    q.add_argument("--out")
    num(q, "K", "minibatch", "epochs", "vocab", kind=int)
    num(q, "lam", "gamma", "lr")
    q = leaf(rbm, "eval", cmd_rbm_eval, "exact perplexity and hidden-unit diversity")
    q.add_argument("--model")
    q.add_argument("--docs")
    q.add_argument("--no-perplexity", dest="no_perplexity", action="store_true", default=None)
    num(q, "k", kind=int)
    q = leaf(rbm, "topics", cmd_rbm_topics, "top words per hidden unit")
    q.add_argument("--model")
    num(q, "top", kind=int)

    nn = groups.add_parser("nn", help="one-hidden-layer network").add_subparsers(dest="action", parser_class=_Parser)
    for name, func in (("train", cmd_nn_train), ("sweep", cmd_nn_sweep)):
        q = leaf(nn, name, func, "train" if name == "train" else "held-out accuracy across lambda values")
        q.add_argument("--data")
        num(q, "m", "minibatch", "epochs", kind=int)
        num(q, "lam", "gamma", "lr")
        if name == "train":
            q.add_argument("--out")
        else:
            q.add_argument("--lams")
            num(q, "heldout")
    q = leaf(nn, "eval", cmd_nn_eval, "accuracy and hidden-unit diversity")
    q.add_argument("--model")
    q.add_argument("--data")
    num(q, "gamma")

    bounds = groups.add_parser("bounds", help="generalization bounds").add_subparsers(dest="action", parser_class=_Parser)
    for name, func in (("eval", cmd_bounds_eval), ("scan", cmd_bounds_scan)):
        q = leaf(bounds, name, func, "evaluate every bound" if name == "eval" else "theta tradeoff table")
        num(q, "m", "n", "Kclasses", kind=int)
        num(q, "L", "C1", "C2", "C3", "C4", "h0", "theta", "tau", "delta", "C")
        if name == "scan":
            q.add_argument("--grid", help="start:stop:step or comma list")
            q.add_argument("--loss", choices=sorted(bnd.ESTIMATORS))

    q = leaf(groups, "synth", cmd_synth, "generate long-tail data")
    q.add_argument("--mode", choices=("docs", "features"))
    q.add_argument("--out")
    num(q, "topics", "n", "dim", "doc_length", kind=int)
    num(q, "exponent")

    q = leaf(groups, "verify", cmd_verify, "run the property suites")
    num(q, "trials", kind=int)
    return p


REQUIRED = {
    cmd_reg_eval: ("matrix",), cmd_reg_grad: ("matrix",),
    cmd_dml_train: ("data", "out"), cmd_dml_eval: ("model", "data"),
    cmd_rbm_train: ("docs", "out"), cmd_rbm_eval: ("model", "docs"), cmd_rbm_topics: ("model",),
    cmd_nn_train: ("data", "out"), cmd_nn_eval: ("model", "data"), cmd_nn_sweep: ("data",),
    cmd_synth: ("out",),
}


def cli(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        config = load_config(args.config or os.environ.get(CONFIG_ENV))
        section = config.get(args.group) if isinstance(config.get(args.group), dict) else config
        opts = Options(args, section)
        missing = [n for n in REQUIRED.get(args.func, ()) if opts.get(n) is None]
        if missing:
            print(f"marlvm: error: missing --{', --'.join(missing)}", file=sys.stderr)
            return 2
        return args.func(opts) or 0
    except (MarError, ValueError, OSError, ArithmeticError, AssertionError) as exc:
        print(f"marlvm: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
