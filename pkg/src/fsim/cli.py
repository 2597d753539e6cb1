"""Command-line front end: simulation runs, fitting, prediction, boosting.

All randomness flows from explicit --seed flags, outputs are plain CSV or
key=value text written atomically, and re-running a command with the same
flags produces byte-identical files.

Exit codes: 0 success, 2 usage, 3 ingestion (missing/malformed/misaligned
inputs, grid mismatches), 4 numerical degeneracy (empty direction set or
an all-degenerate cross-validation grid).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .basis import BasisSpec, DirectionSetSpec
from .curves import (
    Grid,
    atomic_write_text,
    derivative_matrix,
    read_curves_csv,
    read_responses_csv,
)
from .errors import (
    BasisFitError,
    DegenerateDirectionError,
    DegenerateModelError,
    DomainError,
    EmptyDirectionSetError,
    GridMismatchError,
    IngestionError,
)
from .estimators import Kernel, TrainingSet
from .selection import (
    KERNEL_SMOOTHER,
    KNN_SMOOTHER,
    BoostedFSIM,
    FittedFSIM,
    boost_residuals,
    default_k_grid,
    fit_fsim,
    fitted_fsim_fields,
    fitted_fsim_from_fields,
    msep,
    write_cv_csv,
)
from .simulation import SimDesign, run_monte_carlo

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INGESTION = 3
EXIT_DEGENERATE = 4

TECATOR_CHANNELS = 100


# --------------------------------------------------------------------------
# shared option groups and small parsers
# --------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--curves", help="curves CSV (first row = grid points)")
    p.add_argument("--responses", help="responses CSV (one value per line)")
    p.add_argument(
        "--tecator",
        help="file in the public Tecator layout: rows of 100 absorbances followed by the "
        "fat content; curves are placed on the index grid 1..100",
    )
    p.add_argument(
        "--derivative",
        type=int,
        choices=(0, 1, 2),
        default=0,
        help="derivative order applied to the curves on load",
    )
    p.add_argument("--deriv-order", type=int, default=4, help="spline order for derivatives")
    p.add_argument("--deriv-knots", type=int, default=20, help="interior knots for derivatives")


def _add_model_flags(p: argparse.ArgumentParser, multi_knots: bool, allow_both: bool = False) -> None:
    choices = (KERNEL_SMOOTHER, KNN_SMOOTHER, "both") if allow_both else (KERNEL_SMOOTHER, KNN_SMOOTHER)
    p.add_argument("--smoother", choices=choices, default="both" if allow_both else KNN_SMOOTHER)
    p.add_argument(
        "--kernel", choices=tuple(k.value for k in Kernel), default=Kernel.EPANECHNIKOV.value
    )
    p.add_argument("--order", type=int, default=3, help="B-spline order of the direction basis")
    p.add_argument(
        "--knots",
        type=_int_list,
        default=[4],
        help="interior knot count, or a comma list of candidates selected by CV"
        if multi_knots
        else "interior knot count",
    )
    p.add_argument(
        "--seeds-set",
        type=_float_list,
        default=[-1.0, 0.0, 1.0],
        help="seed coefficients (write --seeds-set=-1,0,1)",
    )
    p.add_argument("--t0", type=float, default=None, help="positivity point (default: domain midpoint)")
    p.add_argument("--h-grid-size", type=int, default=25)
    p.add_argument("--k-max-frac", type=float, default=0.95)


def _add_split_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train-idx", help="file of 0-based training row indices, one per line")
    p.add_argument("--train-size", type=int, help="random training size (needs --seed)")
    p.add_argument("--seed", type=int, default=0)


# --------------------------------------------------------------------------
# data loading
# --------------------------------------------------------------------------


def _load_table(path, delimiter=None) -> np.ndarray:
    if not os.path.exists(path):
        raise IngestionError(f"file not found: {path}")
    try:
        try:
            return np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError:
            return np.loadtxt(path, ndmin=2)
    except ValueError as exc:
        raise IngestionError(f"cannot parse {path}: {exc}") from exc


def load_tecator(path) -> tuple[Grid, np.ndarray, np.ndarray]:
    """Public Tecator layout: each row 100 absorbance channels then the fat content."""
    raw = _load_table(path)
    if raw.shape[1] < TECATOR_CHANNELS + 1:
        raise IngestionError(
            f"{path}: expected >= {TECATOR_CHANNELS + 1} columns "
            f"(100 absorbances + fat), found {raw.shape[1]}"
        )
    grid = Grid.equispaced(1.0, float(TECATOR_CHANNELS), TECATOR_CHANNELS)
    return grid, raw[:, :TECATOR_CHANNELS], raw[:, TECATOR_CHANNELS]


def load_dataset(args) -> tuple[Grid, np.ndarray, np.ndarray]:
    if args.tecator:
        return load_tecator(args.tecator)
    if not args.curves or not args.responses:
        raise IngestionError("need --curves and --responses (or --tecator)")
    if not os.path.exists(args.curves):
        raise IngestionError(f"file not found: {args.curves}")
    if not os.path.exists(args.responses):
        raise IngestionError(f"file not found: {args.responses}")
    try:
        grid, X = read_curves_csv(args.curves)
        y = read_responses_csv(args.responses)
    except ValueError as exc:
        raise IngestionError(f"cannot parse input files: {exc}") from exc
    if X.shape[0] != y.shape[0]:
        raise IngestionError(
            f"row mismatch: {X.shape[0]} curves vs {y.shape[0]} responses"
        )
    return grid, X, y


def _apply_derivative(grid: Grid, X: np.ndarray, args, order: int) -> np.ndarray:
    if order == 0:
        return X
    lo, hi = grid.span
    spec = BasisSpec(args.deriv_order, args.deriv_knots, (lo, hi))
    return derivative_matrix(grid, X, order, spec)


def _resolve_split(args, n_rows: int) -> tuple[np.ndarray, np.ndarray]:
    all_idx = np.arange(n_rows)
    if args.train_idx:
        if not os.path.exists(args.train_idx):
            raise IngestionError(f"file not found: {args.train_idx}")
        idx = np.loadtxt(args.train_idx, dtype=int, ndmin=1)
        if idx.size == 0 or idx.min() < 0 or idx.max() >= n_rows or np.unique(idx).size != idx.size:
            raise IngestionError("train indices must be distinct and within the dataset")
        train = np.sort(idx)
    elif args.train_size:
        if not 2 <= args.train_size <= n_rows:
            raise IngestionError(f"--train-size must be in [2, {n_rows}]")
        rng = np.random.default_rng(args.seed)
        train = np.sort(rng.permutation(n_rows)[: args.train_size])
    else:
        train = all_idx
    test = np.setdiff1d(all_idx, train)
    return train, test


def _direction_spec(args, grid: Grid, knots: int) -> DirectionSetSpec:
    lo, hi = grid.span
    return DirectionSetSpec(
        basis=BasisSpec(args.order, knots, (lo, hi)),
        seeds=tuple(args.seeds_set),
        t0=args.t0,
    )


def _fit(args, train: TrainingSet, smoother: str) -> FittedFSIM:
    from .selection import HGridPolicy

    spec = _direction_spec(args, train.grid, args.knots[0])
    return fit_fsim(
        train,
        spec,
        smoother=smoother,
        kernel=Kernel(args.kernel),
        h_grid=HGridPolicy(args.h_grid_size) if smoother == KERNEL_SMOOTHER else None,
        k_grid=(
            default_k_grid(train.n, frac=args.k_max_frac) if smoother == KNN_SMOOTHER else None
        ),
        interior_knot_candidates=args.knots,
    )


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


def _write_record(path, fields: dict[str, str]) -> None:
    atomic_write_text(path, "".join(f"{k}={v}\n" for k, v in fields.items()))


def _read_record(path) -> dict[str, str]:
    if not os.path.exists(path):
        raise IngestionError(f"file not found: {path}")
    fields = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if "=" not in line:
                raise IngestionError(f"malformed record line in {path}: {line!r}")
            key, value = line.split("=", 1)
            fields[key] = value
    return fields


def _write_predictions(path, values: np.ndarray, degenerate: np.ndarray) -> None:
    lines = ["prediction,degenerate"]
    for v, d in zip(values, degenerate):
        lines.append(f"{v:.17g},{int(d)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def _csv(path, header: str, rows: list[str]) -> None:
    atomic_write_text(path, "\n".join([header, *rows]) + ("\n" if rows or header else ""))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    h_grid_size = 15 if args.fast else args.h_grid_size
    k_max_values = 15 if args.fast else 50
    design = SimDesign(
        n_train=args.n,
        n_test=args.test_size,
        grid_size=args.grid_size,
        noise_ratio=args.noise_ratio,
        seed=args.seed,
    )
    smoothers = (
        (KERNEL_SMOOTHER, KNN_SMOOTHER) if args.smoother == "both" else (args.smoother,)
    )
    spec = DirectionSetSpec(
        basis=BasisSpec(args.order, args.knots[0], (0.0, 1.0)),
        seeds=tuple(args.seeds_set),
        t0=0.5 if args.t0 is None else args.t0,
    )
    result = run_monte_carlo(
        design,
        args.replicates,
        smoothers=smoothers,
        direction_spec=spec,
        kernel=Kernel(args.kernel),
        h_grid_size=h_grid_size,
        k_max_values=k_max_values,
        k_frac=args.k_max_frac,
        standardize=not args.raw_scale,
    )
    rows = [
        f'{r["replicate"]},{r["n"]},{r["smoother"]},{r["msep"]:.17g},'
        f'{r["tuning"]:.17g},{r["direction_index"]}'
        for r in result.records
    ]
    _csv(
        os.path.join(args.out, "msep_replicates.csv"),
        "replicate,n,smoother,msep,selected_tuning,selected_direction_index",
        rows,
    )
    for smoother, curve in result.curves.items():
        rows = [
            f"{tv:.17g},{cv:.17g},{mv:.17g}"
            for tv, cv, mv in zip(curve["mean_tuning"], curve["mean_cv"], curve["mean_test_msep"])
        ]
        _csv(
            os.path.join(args.out, f"curve_{smoother}.csv"),
            "grid_value,mean_cv,mean_test_msep",
            rows,
        )
    summary_rows = [
        f"{args.n},{sm},{mean:.17g},{sd:.17g}" for sm, (mean, sd) in result.summary.items()
    ]
    _csv(os.path.join(args.out, "summary.csv"), "n,smoother,mean_msep,sd_msep", summary_rows)
    print(f"n={args.n} replicates={args.replicates}")
    for sm, (mean, sd) in result.summary.items():
        print(f"  {sm:7s} mean MSEP {mean:.6g} (sd {sd:.6g})")
    if result.failures:
        for f in result.failures:
            print(f"  replicate {f['replicate']} failed: {f['error']}", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def _dataset_fields(args) -> dict[str, str]:
    fields = {}
    if args.tecator:
        fields["tecator"] = args.tecator
    else:
        fields["train_curves"] = args.curves
        fields["train_responses"] = args.responses
    fields["derivative"] = str(args.derivative)
    fields["deriv_order"] = str(args.deriv_order)
    fields["deriv_knots"] = str(args.deriv_knots)
    return fields


def _load_model(path) -> tuple[dict[str, str], FittedFSIM, Grid, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Rebuild a fitted model and its raw dataset from a model record."""
    fields = _read_record(path)

    class _Args:
        tecator = fields.get("tecator")
        curves = fields.get("train_curves")
        responses = fields.get("train_responses")
        deriv_order = int(fields.get("deriv_order", "4"))
        deriv_knots = int(fields.get("deriv_knots", "20"))

    grid, X_raw, y = load_dataset(_Args)
    order = int(fields.get("derivative", "0"))
    X = _apply_derivative(grid, X_raw, _Args, order)
    if fields.get("train_indices"):
        train_idx = np.array([int(v) for v in fields["train_indices"].split(",")])
    else:
        train_idx = np.arange(X.shape[0])
    test_idx = np.setdiff1d(np.arange(X.shape[0]), train_idx)
    train = TrainingSet(grid, X[train_idx], y[train_idx])
    fit = fitted_fsim_from_fields(fields, train)
    return fields, fit, grid, X_raw, y, train_idx, test_idx


def cmd_fit(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    grid, X_raw, y = load_dataset(args)
    X = _apply_derivative(grid, X_raw, args, args.derivative)
    train_idx, test_idx = _resolve_split(args, X.shape[0])
    train = TrainingSet(grid, X[train_idx], y[train_idx])
    fit = _fit(args, train, args.smoother)

    fields = fitted_fsim_fields(fit, args.smoother)
    fields.update(_dataset_fields(args))
    fields["train_indices"] = ",".join(str(i) for i in train_idx)
    _write_record(os.path.join(args.out, "model.txt"), fields)

    assert fit.cv is not None
    write_cv_csv(os.path.join(args.out, "cv.csv"), fit.cv)

    theta_vals = fit.direction.eval(grid.points)
    _csv(
        os.path.join(args.out, "direction_curve.csv"),
        "t,theta",
        [f"{t:.17g},{v:.17g}" for t, v in zip(grid.points, theta_vals)],
    )

    fitted = fit.predict(train.X)
    proj = fit.projections(train.X)
    _csv(
        os.path.join(args.out, "link_scatter.csv"),
        "projection,fitted",
        [f"{p:.17g},{v:.17g}" for p, v in zip(proj, fitted.values)],
    )
    _write_predictions(os.path.join(args.out, "fitted.csv"), fitted.values, fitted.degenerate)

    report = [
        f"smoother={args.smoother}",
        f"kernel={args.kernel}",
        f"selected_knots={fit.direction.spec.interior_knots}",
        f"tuning_kind={fields['tuning_kind']}",
        f"tuning_value={fields['tuning_value']}",
        f"cv_best_score={fit.best_cv_score:.17g}",
        f"n_train={train.n}",
        f"n_test={test_idx.size}",
        f"degenerate_cells={fit.cv.degenerate_count}",
    ]
    if test_idx.size:
        test_pred = fit.predict(X[test_idx])
        report.append(f"test_msep={msep(y[test_idx], test_pred.values):.17g}")
    text = "\n".join(report) + "\n"
    atomic_write_text(os.path.join(args.out, "report.txt"), text)
    print(text, end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    fields, fit, grid, _, _, _, _ = _load_model(args.model)
    if not os.path.exists(args.curves):
        raise IngestionError(f"file not found: {args.curves}")
    try:
        new_grid, X_new = read_curves_csv(args.curves)
    except ValueError as exc:
        raise IngestionError(f"cannot parse {args.curves}: {exc}") from exc
    if not new_grid.matches(grid):
        raise GridMismatchError(
            f"prediction grid ({new_grid.size} points on [{new_grid.span[0]}, {new_grid.span[1]}]) "
            f"does not match the training grid ({grid.size} points on [{grid.span[0]}, {grid.span[1]}])"
        )

    # incoming curves are raw; apply the same on-load derivative as at fit time
    class _DerivArgs:
        deriv_order = int(fields.get("deriv_order", "4"))
        deriv_knots = int(fields.get("deriv_knots", "20"))

    if X_new.shape[0]:
        X_new = _apply_derivative(grid, X_new, _DerivArgs, int(fields.get("derivative", "0")))
    pred = fit.predict(X_new.reshape(-1, grid.size))
    _write_predictions(args.out, pred.values, pred.degenerate)
    print(f"wrote {X_new.shape[0]} predictions to {args.out}")
    return EXIT_OK


def cmd_boost(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    fields, fit, grid, X_raw, y, train_idx, test_idx = _load_model(args.model)

    class _DerivArgs:
        deriv_order = int(fields.get("deriv_order", "4"))
        deriv_knots = int(fields.get("deriv_knots", "20"))

    X_boost = _apply_derivative(grid, X_raw, _DerivArgs, args.boost_derivative)
    fnm = boost_residuals(
        fit,
        grid,
        X_boost[train_idx],
        smoother=fields["smoother"],
        kernel=fit.kernel,
        h_grid_size=args.h_grid_size,
    )
    boosted = BoostedFSIM(fit, fnm)

    out_fields = {
        "model": "boosted_fsim",
        "base_model": args.model,
        "boost_derivative": str(args.boost_derivative),
        "fnm_tuning_kind": fnm.cv.tuning_kind,
        "fnm_tuning_value": repr(fnm.cv.best_tuning),
        "fnm_kernel": fnm.kernel.value,
    }
    _write_record(os.path.join(args.out, "boosted_model.txt"), out_fields)

    report = [
        f"base_model={args.model}",
        f"boost_derivative={args.boost_derivative}",
        f"fnm_tuning_kind={fnm.cv.tuning_kind}",
        f"fnm_tuning_value={fnm.cv.best_tuning:.17g}",
    ]
    if test_idx.size:
        X2 = _apply_derivative(grid, X_raw, _DerivArgs, int(fields.get("derivative", "0")))
        base_pred = fit.predict(X2[test_idx])
        comb_pred = boosted.predict(X2[test_idx], X_boost[test_idx])
        base_msep = msep(y[test_idx], base_pred.values)
        comb_msep = msep(y[test_idx], comb_pred.values)
        report += [
            f"base_test_msep={base_msep:.17g}",
            f"combined_test_msep={comb_msep:.17g}",
            f"improving={int(comb_msep < base_msep)}",
        ]
        pred_rows = [
            f"{b:.17g},{c:.17g}" for b, c in zip(base_pred.values, comb_pred.values)
        ]
        _csv(
            os.path.join(args.out, "test_predictions.csv"),
            "base_prediction,combined_prediction",
            pred_rows,
        )
    text = "\n".join(report) + "\n"
    atomic_write_text(os.path.join(args.out, "report.txt"), text)
    print(text, end="")
    return EXIT_OK


def cmd_splits_study(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    grid, X_raw, y = load_dataset(args)
    X = _apply_derivative(grid, X_raw, args, args.derivative)
    smoothers = (
        (KERNEL_SMOOTHER, KNN_SMOOTHER) if args.smoother == "both" else (args.smoother,)
    )
    partition_rows = []
    summary_rows = []
    for n in args.n_values:
        pool = n + args.test_size
        if pool > X.shape[0]:
            raise IngestionError(
                f"n={n} with test size {args.test_size} exceeds the dataset ({X.shape[0]} rows)"
            )
        per_smoother: dict[str, list[float]] = {s: [] for s in smoothers}
        for j in range(args.partitions):
            rng = np.random.default_rng(args.seed + j)
            perm = rng.permutation(pool)
            tr, te = np.sort(perm[:n]), np.sort(perm[n:])
            train = TrainingSet(grid, X[tr], y[tr])
            for smoother in smoothers:
                fit = _fit(args, train, smoother)
                value = msep(y[te], fit.predict(X[te]).values)
                per_smoother[smoother].append(value)
                partition_rows.append(f"{n},{j},{smoother},{value:.17g}")
        for smoother in smoothers:
            vals = np.array(per_smoother[smoother])
            sd = vals.std(ddof=1) if vals.size > 1 else 0.0
            summary_rows.append(f"{n},{smoother},{vals.mean():.17g},{sd:.17g}")
            print(f"n={n} {smoother:7s} mean MSEP {vals.mean():.6g} (sd {sd:.6g})")
    _csv(os.path.join(args.out, "partitions.csv"), "n,partition,smoother,msep", partition_rows)
    _csv(os.path.join(args.out, "summary.csv"), "n,smoother,mean_msep,sd_msep", summary_rows)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsim",
        description="Kernel and kNN estimation of the functional single-index model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="seeded Monte-Carlo study of the synthetic design")
    p.add_argument("--n", type=_positive_int, required=True, help="training sample size")
    p.add_argument("--replicates", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-size", type=_positive_int, default=25)
    p.add_argument("--noise-ratio", type=float, default=0.025)
    p.add_argument("--grid-size", type=_positive_int, default=100)
    p.add_argument("--smoother", choices=(KERNEL_SMOOTHER, KNN_SMOOTHER, "both"), default="both")
    p.add_argument(
        "--kernel", choices=tuple(k.value for k in Kernel), default=Kernel.EPANECHNIKOV.value
    )
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--knots", type=_int_list, default=[3])
    p.add_argument("--seeds-set", type=_float_list, default=[-1.0, 0.0, 1.0])
    p.add_argument("--t0", type=float, default=None)
    p.add_argument("--h-grid-size", type=int, default=25)
    p.add_argument("--k-max-frac", type=float, default=0.95)
    p.add_argument("--fast", action="store_true", help="thin the tuning grids (quick profile)")
    p.add_argument("--raw-scale", action="store_true", help="skip response standardization")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the single-index model to a dataset")
    _add_data_flags(p)
    _add_model_flags(p, multi_knots=True)
    _add_split_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict responses for new curves")
    p.add_argument("--model", required=True, help="model.txt written by fit")
    p.add_argument("--curves", required=True, help="curves CSV on the training grid")
    p.add_argument("--out", required=True, help="output predictions CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("boost", help="nonparametric boosting of a fitted model's residuals")
    p.add_argument("--model", required=True)
    p.add_argument("--boost-derivative", type=int, choices=(0, 1, 2), default=1)
    p.add_argument("--h-grid-size", type=int, default=25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_boost)

    p = sub.add_parser("splits-study", help="random train/test partitions over growing n")
    _add_data_flags(p)
    _add_model_flags(p, multi_knots=True, allow_both=True)
    p.add_argument("--n-values", type=_int_list, required=True)
    p.add_argument("--partitions", type=_positive_int, default=20)
    p.add_argument("--test-size", type=_positive_int, default=55)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_splits_study)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IngestionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INGESTION
    except (GridMismatchError, DomainError, BasisFitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INGESTION
    except (DegenerateModelError, DegenerateDirectionError, EmptyDirectionSetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
