"""Command-line front end.

Subcommands compose through files only: ``assemble`` writes the operator
container, ``phantoms`` the datasets, ``train`` one model per alpha plus
a manifest, and ``reconstruct`` / ``evaluate`` / ``rates`` / ``distfn`` /
``checkfilter`` produce PGM images, CSV curves and plain-text summaries.
Configuration is a key=value file overridden by flags; every output
embeds the resolved config hash and seeds in its metadata, so reruns
with an identical config are byte-identical.

Exit codes: 0 success, 1 usage error, 2 numeric failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import analysis, network, radon, regnet, storage
from .filters import (
    FilterRegularizer,
    LandweberFilter,
    make_filter,
    qualification_sup,
    verify_filter_axioms,
)
from .linop import svd_decompose

__all__ = ["RunConfig", "main", "console_main"]


@dataclass(frozen=True)
class RunConfig:
    # geometry
    grid_n: int = 64
    n_angles: int = 15
    n_detectors: int = 64
    kb_support: float = 0.055
    kb_shape: float = 7.0
    rank_tol: float = 1e-10
    paper_scale: bool = False
    # filter / methods
    filter: str = "tsvd"
    landweber_beta: float = 0.0  # 0 means 1/sigma_1^2 of the loaded operator
    alphas: str = "1e-2"
    method: str = "continued"
    # network and training
    hidden: str = "16,16"
    residual: bool = False
    lr: float = 0.05
    momentum: float = 0.99
    epochs: int = 20
    batch_size: int = 10
    # datasets and noise
    train_count: int = 200
    test_count: int = 50
    deltas: str = "0.02,0.05"
    rate_deltas: str = "1e-6,3.2e-6,1e-5,3.2e-5,1e-4,3.2e-4,1e-3,3.2e-3,1e-2"
    # analysis
    mu: float = 0.5
    rho: float = 1.0
    scale_c: float = 1.0
    lambda_max: float = 1.0
    recon_index: int = 0
    # seeds and paths
    seed: int = 0
    operator_path: str = "operator.rgn1"
    train_path: str = "train.rgn1"
    test_path: str = "test.rgn1"
    model_dir: str = "models"
    out_dir: str = "out"

    def alpha_list(self):
        return _parse_floats(self.alphas)

    def delta_list(self):
        return _parse_floats(self.deltas)

    def geometry(self) -> radon.RadonGeometry:
        if self.paper_scale:
            return radon.RadonGeometry.paper_scale()
        return radon.RadonGeometry(
            grid_n=self.grid_n,
            n_angles=self.n_angles,
            n_detectors=self.n_detectors,
            kb_support=self.kb_support,
            kb_shape=self.kb_shape,
        )

    def arch(self, grid_n: int) -> network.NetworkArch:
        hidden = tuple(int(h) for h in self.hidden.split(",") if h.strip())
        return network.NetworkArch(grid=grid_n, hidden=hidden, residual=self.residual)

    def resolved(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def config_hash(self) -> str:
        body = "\n".join(f"{k}={v}" for k, v in sorted(self.resolved().items()))
        return hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]

    def meta(self) -> dict:
        return {"config": self.config_hash(), "seed": self.seed}


def _parse_floats(text: str):
    values = [float(part) for part in str(text).split(",") if part.strip()]
    if not values:
        raise ValueError(f"empty numeric list: {text!r}")
    return values


_BOOL_KEYS = {"paper_scale", "residual"}
_INT_KEYS = {
    "grid_n", "n_angles", "n_detectors", "epochs", "batch_size",
    "train_count", "test_count", "seed", "recon_index",
}
_FLOAT_KEYS = {
    "kb_support", "kb_shape", "rank_tol", "landweber_beta", "lr", "momentum",
    "mu", "rho", "scale_c", "lambda_max",
}


def _coerce(key: str, value: str):
    if key in _BOOL_KEYS:
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    return value


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path:
        known = {f.name for f in fields(RunConfig)}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, value.strip())
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return RunConfig(**values)


def _overrides_from_args(args) -> dict:
    out = {}
    for key in ("seed", "paper_scale", "method", "out_dir"):
        if getattr(args, key, None) not in (None, False):
            out[key] = getattr(args, key)
    if getattr(args, "alpha", None):
        out["alphas"] = args.alpha
    if getattr(args, "delta", None):
        out["deltas"] = args.delta
    return out


def _load_operator(cfg: RunConfig):
    op = storage.read_operator(cfg.operator_path)
    return op


def _make_cfg_filter(cfg: RunConfig, op=None):
    beta = cfg.landweber_beta
    if cfg.filter == "landweber" and beta <= 0:
        if op is None or op.sigma_max == 0:
            beta = 1.0
        else:
            beta = 1.0 / op.sigma_max**2
        return LandweberFilter(beta)
    return make_filter(cfg.filter, beta if beta > 0 else None)


def cmd_assemble(cfg: RunConfig) -> int:
    geom = cfg.geometry()
    matrix = radon.assemble_matrix(geom)
    op = svd_decompose(matrix, cfg.rank_tol)
    meta = cfg.meta()
    meta.update(
        grid_n=geom.grid_n, n_angles=geom.n_angles, n_detectors=geom.n_detectors,
        kb_support=geom.kb_support, kb_shape=geom.kb_shape,
    )
    storage.write_operator(cfg.operator_path, op, meta)
    print(f"assemble: wrote {op.rows}x{op.cols} operator (rank {op.rank}) to {cfg.operator_path}")
    return 0


def cmd_phantoms(cfg: RunConfig) -> int:
    geom = cfg.geometry()
    train_seeds = range(cfg.seed, cfg.seed + cfg.train_count)
    test_seeds = range(cfg.seed + 1_000_000, cfg.seed + 1_000_000 + cfg.test_count)
    for path, seeds in ((cfg.train_path, train_seeds), (cfg.test_path, test_seeds)):
        items = [radon.gen_phantom(s, geom.grid_n).coeffs for s in seeds]
        data = np.vstack(items) if items else np.zeros((0, geom.cols))
        meta = cfg.meta()
        meta.update(count=len(items), grid_n=geom.grid_n, first_seed=seeds.start)
        storage.write_array(path, data, meta)
        print(f"phantoms: wrote {len(items)} phantoms to {path}")
    return 0


def _filtered_batch(op, filt, alpha, sinograms):
    """B_alpha applied to every row of a (count, rows) sinogram array."""
    reg = FilterRegularizer(op, filt, alpha)
    kept = op.kept
    gain = reg._gain()
    coef = (sinograms @ op.data_vectors[:, kept]) * gain[None, :]
    return coef @ op.image_vectors[:, kept].T


def cmd_train(cfg: RunConfig) -> int:
    op = _load_operator(cfg)
    filt = _make_cfg_filter(cfg, op)
    if cfg.method not in (regnet.NULLSPACE, regnet.CONTINUED):
        raise ValueError(f"config method must be nullspace or continued, got {cfg.method!r}")
    truths = storage.read_array(cfg.train_path)
    if truths.shape[0] == 0:
        raise ValueError("empty training set")
    grid_n = int(round(op.cols**0.5))
    arch = cfg.arch(grid_n)
    sinograms = truths @ op.matrix.T  # noise-free data

    model_dir = Path(cfg.model_dir) / cfg.method
    model_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    caps = []
    for idx, alpha in enumerate(cfg.alpha_list()):
        base = _filtered_batch(op, filt, alpha, sinograms)
        project = regnet.residual_projection(cfg.method, op, alpha)
        params = network.init_network(arch, cfg.seed + 1000 * idx)
        state = network.TrainState(lr=cfg.lr, momentum=cfg.momentum)
        history = network.train(
            params, state, base, truths, offsets=base, project=project,
            epochs=cfg.epochs, batch_size=cfg.batch_size, shuffle_seed=cfg.seed + idx,
        )
        for epoch, loss in enumerate(history):
            print(f"train[{cfg.method}] alpha={alpha:g} epoch={epoch} loss={loss:.6g}")
        model_path = model_dir / f"model_{idx:03d}.rgnn"
        meta = cfg.meta()
        meta.update(alpha=repr(alpha), final_loss=repr(history[-1]))
        storage.write_model(model_path, params, meta)
        storage.write_keyvalue(
            model_dir / f"loss_{idx:03d}.txt",
            {f"epoch_{e}": repr(l) for e, l in enumerate(history)},
        )
        caps.append(network.lipschitz_upper_bound(params))
        entries.append((alpha, model_path.name))
    meta = cfg.meta()
    meta.update(method=cfg.method, lipschitz_cap=repr(max(caps)))
    storage.write_manifest(model_dir / "manifest.txt", entries, meta)
    print(f"train: wrote {len(entries)} models to {model_dir}")
    return 0


def _load_family(cfg: RunConfig, op, filt, variant):
    manifest = Path(cfg.model_dir) / variant / "manifest.txt"
    if not manifest.exists():
        return None
    entries = storage.read_manifest(manifest)
    members = [
        (alpha, storage.read_model(manifest.parent / name))
        for alpha, name in sorted(entries, key=lambda e: -e[0])
    ]
    cap = max(network.lipschitz_upper_bound(p) for _, p in members)
    return regnet.RegNetFamily(variant, op, filt, members, lipschitz_cap=cap)


def _methods_for(cfg, op, filt, alpha, families):
    methods = [regnet.ReconstructionMethod(regnet.CLASSICAL, op, filt, alpha)]
    for variant in (regnet.NULLSPACE, regnet.CONTINUED):
        family = families.get(variant)
        if family is not None:
            methods.append(family.nearest(alpha))
    return methods


def cmd_reconstruct(cfg: RunConfig) -> int:
    op = _load_operator(cfg)
    filt = _make_cfg_filter(cfg, op)
    truths = storage.read_array(cfg.test_path)
    if cfg.recon_index >= truths.shape[0]:
        raise ValueError(f"recon_index {cfg.recon_index} out of range for {truths.shape[0]} test images")
    truth = truths[cfg.recon_index]
    grid_n = int(round(op.cols**0.5))
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    families = {
        v: _load_family(cfg, op, filt, v) for v in (regnet.NULLSPACE, regnet.CONTINUED)
    }
    alpha = cfg.alpha_list()[0]
    y = op.forward(truth)
    storage.write_pgm16(out_dir / "truth.pgm", truth.reshape(grid_n, grid_n))
    for delta in cfg.delta_list():
        y_delta = radon.add_noise(y, delta, cfg.seed)
        for m in _methods_for(cfg, op, filt, alpha, families):
            rec = m.reconstruct(y_delta).reshape(grid_n, grid_n)
            name = f"recon_d{delta:g}_{m.variant}.pgm"
            storage.write_pgm16(out_dir / name, rec)
            print(f"reconstruct: wrote {out_dir / name}")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    op = _load_operator(cfg)
    filt = _make_cfg_filter(cfg, op)
    truths = storage.read_array(cfg.test_path)
    if truths.shape[0] == 0:
        raise ValueError("empty test set")
    sinograms = truths @ op.matrix.T
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    families = {
        v: _load_family(cfg, op, filt, v) for v in (regnet.NULLSPACE, regnet.CONTINUED)
    }
    variants = [regnet.CLASSICAL] + [v for v, f in families.items() if f is not None]
    alphas = cfg.alpha_list()
    n_val = min(10, truths.shape[0])
    selection = {}
    for delta in cfg.delta_list():
        for variant in variants:
            methods = []
            for alpha in alphas:
                if variant == regnet.CLASSICAL:
                    methods.append(regnet.ReconstructionMethod(variant, op, filt, alpha))
                else:
                    methods.append(families[variant].nearest(alpha))
            val_report = analysis.evaluate_testset(
                methods, truths[:n_val], sinograms[:n_val], delta, cfg.seed
            )
            selection[f"alpha_star_{variant}_d{delta:g}"] = repr(val_report.best_alpha)
            report = analysis.evaluate_testset(methods, truths, sinograms, delta, cfg.seed)
            meta = cfg.meta()
            meta.update(variant=variant, delta=repr(delta), validation_size=n_val)
            path = out_dir / f"evaluate_{variant}_d{delta:g}.csv"
            storage.write_curve_csv(path, report.curve_rows, meta)
            print(f"evaluate: wrote {path} (best alpha {report.best_alpha:g})")
    selection.update({k: str(v) for k, v in cfg.meta().items()})
    storage.write_keyvalue(out_dir / "selection.txt", selection)
    return 0


def cmd_rates(cfg: RunConfig) -> int:
    op = _load_operator(cfg)
    filt = _make_cfg_filter(cfg, op)
    sc = analysis.SourceCondition(mu=cfg.mu, rho=cfg.rho)
    deltas = _parse_floats(cfg.rate_deltas)
    report = analysis.rate_experiment(op, filt, sc, deltas, cfg.seed, scale=cfg.scale_c)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    storage.write_rate_csv(out_dir / "rates.csv", report.rate_rows, cfg.meta())
    theory = 2.0 * cfg.mu / (2.0 * cfg.mu + 1.0)
    summary = {
        "slope": repr(report.slope),
        "residual": repr(report.slope_residual),
        "theory": repr(theory),
        **{k: str(v) for k, v in cfg.meta().items()},
    }
    storage.write_keyvalue(out_dir / "slope.txt", summary)
    print(f"rates: slope {report.slope:.4f} (theory {theory:.4f}) -> {out_dir / 'rates.csv'}")
    return 0


def cmd_distfn(cfg: RunConfig) -> int:
    op = _load_operator(cfg)
    filt = _make_cfg_filter(cfg, op)
    sc = analysis.SourceCondition(mu=cfg.mu, rho=cfg.rho)
    rng = np.random.default_rng(cfg.seed)
    w = rng.standard_normal(op.cols)
    w *= sc.rho / np.linalg.norm(w)
    x = op.power_apply(w, sc.mu)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = {f"alpha_{alpha:g}": repr(
        analysis.distance_function(
            op, regnet.ReconstructionMethod(regnet.CLASSICAL, op, filt, alpha), x, sc
        )
    ) for alpha in cfg.alpha_list()}
    lines.update({k: str(v) for k, v in cfg.meta().items()})
    storage.write_keyvalue(out_dir / "distfn.txt", lines)
    print(f"distfn: wrote {out_dir / 'distfn.txt'}")
    return 0


def cmd_checkfilter(cfg: RunConfig) -> int:
    filt = _make_cfg_filter(cfg)
    alphas = np.logspace(-1, -6, 6)
    report = verify_filter_axioms(filt, cfg.lambda_max, alphas)
    lines = {
        "filter": filt.name,
        "bounded": report.bounded,
        "convergent": report.convergent,
        "passed": report.passed,
        "sup_lambda_g": repr(float(np.max(report.per_alpha_sup))),
    }
    for mu in (0.25, 0.5, 1.0):
        if mu > filt.qualification:
            continue
        worst = 0.0
        for alpha in np.logspace(-6, 0, 7):
            sup = qualification_sup(filt, alpha, mu, cfg.lambda_max, 100_000)
            worst = max(worst, float(sup / (filt.constant(mu) * alpha**mu)))
        lines[f"qualification_ratio_mu{mu:g}"] = repr(worst)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines.update({k: str(v) for k, v in cfg.meta().items()})
    storage.write_keyvalue(out_dir / "filter_report.txt", lines)
    for key, value in lines.items():
        print(f"checkfilter: {key}={value}")
    return 0 if report.passed else 2


_COMMANDS = {
    "assemble": cmd_assemble,
    "phantoms": cmd_phantoms,
    "train": cmd_train,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "rates": cmd_rates,
    "distfn": cmd_distfn,
    "checkfilter": cmd_checkfilter,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="regnets", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--alpha", default=None, help="comma-separated alpha list")
        p.add_argument("--delta", default=None, help="comma-separated delta list")
        p.add_argument("--paper-scale", dest="paper_scale", action="store_true", default=False)
        p.add_argument("--method", default=None, choices=["nullspace", "continued"])
        p.add_argument("--out-dir", dest="out_dir", default=None)
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        try:
            cfg = load_config(args.config, _overrides_from_args(args))
        except ValueError as exc:  # malformed key=value file
            raise _UsageError(str(exc)) from exc
        return _COMMANDS[args.command](cfg)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
