"""Config-driven command line: BER experiments, training runs, plot data.

Experiment files are INI-style: one section per experiment, flat keys (see
the shipped presets for the schema).  Every run is reproducible from the
config file and seed alone; outputs carry no timestamps.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .bdnn import (
    FEATURE_MODES,
    HIDDEN_LAYERS,
    TrainingConfig,
    load_model,
    save_model,
    train_network,
)
from .errors import ConfigurationError, FormatError, RislinkError
from .harness import (
    DETECTOR_BDNN,
    DETECTORS,
    Scenario,
    StoppingRule,
    point_seed,
    run_ber_point,
)
from .modulation import MODE_SM, MODE_SSK, MODES

CSV_SCHEMA_COMMENT = "# rislink ber csv v1"
CSV_COLUMNS = [
    "scenario_id", "detector", "mode", "N", "Nr", "M",
    "alpha", "omega", "snr_db", "bits", "errors", "ber", "seed",
]

PRESETS = ("fig3", "fig4", "fig5", "fig6")

_REQUIRED = object()


def _load_config(path: Path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh, source=str(path))
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigurationError(f"unparseable config {path}: {exc}") from exc
    if not cp.sections():
        raise ConfigurationError(f"config {path} defines no sections")
    return cp


def _get(cp, section: str, key: str, conv=str, default=_REQUIRED):
    if not cp.has_option(section, key):
        if default is _REQUIRED:
            raise ConfigurationError(f"[{section}] missing required key {key!r}")
        return default
    raw = cp.get(section, key).strip()
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"[{section}] bad value for key {key!r}: {exc}") from exc


def _snr_grid(start: float, stop: float, step: float) -> list[float]:
    if step <= 0.0:
        raise ConfigurationError(f"snr_step_db must be positive, got {step}")
    if stop < start:
        raise ConfigurationError(f"snr_stop_db {stop} is below snr_start_db {start}")
    count = int((stop - start) / step + 1e-9) + 1
    return [start + i * step for i in range(count)]


@dataclass
class ExperimentSpec:
    """One parsed experiment section."""

    scenario_id: str
    base: Scenario
    detectors: list[str]
    snrs_db: list[float]
    stop: StoppingRule
    seed: int
    model_path: Path | None
    train_cfg: TrainingConfig | None


def _parse_experiment(cp, section: str, overrides: dict) -> ExperimentSpec:
    mode = _get(cp, section, "mode")
    if mode not in MODES:
        raise ConfigurationError(f"[{section}] mode must be one of {MODES}, got {mode!r}")
    feature_mode = overrides.get("feature_mode") or _get(
        cp, section, "feature_mode", default="signed"
    )
    scenario = Scenario(
        mode=mode,
        nr=_get(cp, section, "nr", int),
        n=_get(cp, section, "n", int),
        scheme=_get(cp, section, "scheme", default=None) if mode == MODE_SM else None,
        m=_get(cp, section, "m", int, default=None) if mode == MODE_SM else None,
        alpha=_get(cp, section, "alpha", float, default=1.2),
        omega=_get(cp, section, "omega", float, default=1.0),
        feature_mode=feature_mode,
    )
    detectors = [
        d.strip().lower() for d in _get(cp, section, "detectors", default="ml").split(",")
    ]
    for det in detectors:
        if det not in DETECTORS:
            raise ConfigurationError(
                f"[{section}] unknown detector {det!r}; expected one of {DETECTORS}"
            )
    snrs = _snr_grid(
        _get(cp, section, "snr_start_db", float, default=0.0),
        _get(cp, section, "snr_stop_db", float, default=30.0),
        _get(cp, section, "snr_step_db", float, default=2.0),
    )
    stop = StoppingRule(
        min_bit_errors=overrides.get("min_errors")
        or _get(cp, section, "min_bit_errors", int, default=100),
        max_bits=overrides.get("max_bits")
        or _get(cp, section, "max_bits", int, default=10_000_000),
    )
    seed = overrides.get("seed")
    if seed is None:
        seed = _get(cp, section, "seed", int, default=0)
    model_path = overrides.get("model") or _get(cp, section, "model", default=None)
    train_cfg = None
    if DETECTOR_BDNN in detectors and mode == MODE_SM:
        train_cfg = TrainingConfig(
            learning_rate=_get(cp, section, "train_learning_rate", float, default=0.005),
            epochs=_get(cp, section, "train_epochs", int, default=50),
            batch_size=_get(cp, section, "train_batch_size", int, default=64),
            dataset_size=_get(cp, section, "train_dataset_size", int, default=200_000),
            snr_range_db=(
                _get(cp, section, "train_snr_min_db", float, default=min(snrs)),
                _get(cp, section, "train_snr_max_db", float, default=max(snrs)),
            ),
            seed=_get(cp, section, "train_seed", int, default=seed),
            feature_mode=feature_mode,
        )
    return ExperimentSpec(
        scenario_id=section,
        base=scenario,
        detectors=detectors,
        snrs_db=snrs,
        stop=stop,
        seed=seed,
        model_path=Path(model_path) if model_path else None,
        train_cfg=train_cfg,
    )


def resolve_config(name_or_path: str) -> Path:
    """A real file wins; otherwise fall back to a shipped preset name."""
    path = Path(name_or_path)
    if path.exists():
        return path
    if name_or_path in PRESETS:
        ref = resources.files("rislink").joinpath(f"presets/{name_or_path}.cfg")
        with resources.as_file(ref) as concrete:
            return Path(concrete)
    raise ConfigurationError(
        f"config {name_or_path!r} is neither a file nor a preset {PRESETS}"
    )


def _resolve_model(spec: ExperimentSpec, train_missing: bool):
    """Load (or train and persist) the classifier an SM B-DNN experiment needs."""
    sc = spec.base
    if spec.model_path is None:
        raise ConfigurationError(
            f"[{spec.scenario_id}] B-DNN in SM mode needs a 'model' path "
            "(or pass --model / --train-missing)"
        )
    if spec.model_path.exists():
        params, meta = load_model(spec.model_path)
        if (meta.scheme, meta.nr, meta.n, meta.feature_mode) != (
            sc.scheme, sc.nr, sc.n, sc.feature_mode,
        ):
            raise ConfigurationError(
                f"[{spec.scenario_id}] model {spec.model_path} was trained for "
                f"{meta.scheme}/nr{meta.nr}/n{meta.n}/{meta.feature_mode}, scenario needs "
                f"{sc.scheme}/nr{sc.nr}/n{sc.n}/{sc.feature_mode}"
            )
        return params
    if not train_missing:
        raise ConfigurationError(
            f"[{spec.scenario_id}] model file {spec.model_path} not found "
            "(pass --train-missing to train it now)"
        )
    train_scenario = Scenario(
        mode=sc.mode, nr=sc.nr, n=sc.n, scheme=sc.scheme, m=sc.m,
        alpha=sc.alpha, omega=sc.omega, detector=DETECTOR_BDNN,
        feature_mode=sc.feature_mode,
    )
    params, _ = train_network(train_scenario, spec.train_cfg)
    spec.model_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(
        params, spec.model_path, scheme=sc.scheme, nr=sc.nr, n=sc.n,
        feature_mode=sc.feature_mode,
    )
    return params


def run_experiment(
    config: str,
    *,
    seed: int | None = None,
    out: str | None = None,
    model: str | None = None,
    feature_mode: str | None = None,
    min_errors: int | None = None,
    max_bits: int | None = None,
    workers: int = 1,
    train_missing: bool = False,
) -> Path:
    """Run every (experiment, detector, SNR) combination and write one CSV."""
    config_path = resolve_config(config)
    cp = _load_config(config_path)
    overrides = {
        "seed": seed, "model": model, "feature_mode": feature_mode,
        "min_errors": min_errors, "max_bits": max_bits,
    }
    specs = [_parse_experiment(cp, section, overrides) for section in cp.sections()]

    # Resolve every referenced model up front so a bad path fails fast.
    models: dict[str, object] = {}
    for spec in specs:
        if DETECTOR_BDNN in spec.detectors and spec.base.mode == MODE_SM:
            models[spec.scenario_id] = _resolve_model(spec, train_missing)

    out_path = Path(out) if out else config_path.with_suffix(".csv")
    rows = []
    for spec in specs:
        sc = spec.base
        for det in spec.detectors:
            scenario = Scenario(
                mode=sc.mode, nr=sc.nr, n=sc.n, scheme=sc.scheme, m=sc.m,
                alpha=sc.alpha, omega=sc.omega, detector=det,
                feature_mode=sc.feature_mode,
            )
            params = models.get(spec.scenario_id) if det == DETECTOR_BDNN else None
            for i, snr in enumerate(spec.snrs_db):
                rec = run_ber_point(
                    scenario, snr, spec.stop, point_seed(spec.seed, i),
                    model=params, workers=workers,
                )
                rows.append([
                    spec.scenario_id, det, sc.mode, sc.n, sc.nr,
                    sc.m if sc.mode == MODE_SM else 1,
                    f"{sc.alpha:g}", f"{sc.omega:g}", f"{snr:g}",
                    rec.bits_sent, rec.bit_errors, repr(rec.ber), rec.seed,
                ])
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(CSV_SCHEMA_COMMENT + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)
    return out_path


def train_model(
    config: str,
    *,
    seed: int | None = None,
    out: str | None = None,
    feature_mode: str | None = None,
) -> tuple[Path, Path]:
    """Train one classifier from a config file; writes the model and a loss log."""
    config_path = resolve_config(config)
    cp = _load_config(config_path)
    sections = cp.sections()
    if len(sections) != 1:
        raise ConfigurationError(
            f"training config must have exactly one section, found {len(sections)}"
        )
    section = sections[0]
    mode = _get(cp, section, "mode", default=MODE_SM)
    if mode != MODE_SM:
        raise ConfigurationError(
            f"[{section}] only SM scenarios train a classifier (SSK detection is "
            "model-free)"
        )
    fmode = feature_mode or _get(cp, section, "feature_mode", default="signed")
    scenario = Scenario(
        mode=MODE_SM,
        nr=_get(cp, section, "nr", int),
        n=_get(cp, section, "n", int),
        scheme=_get(cp, section, "scheme"),
        m=_get(cp, section, "m", int, default=None),
        alpha=_get(cp, section, "alpha", float, default=1.2),
        omega=_get(cp, section, "omega", float, default=1.0),
        detector=DETECTOR_BDNN,
        feature_mode=fmode,
    )
    cfg_seed = seed if seed is not None else _get(cp, section, "seed", int, default=0)
    cfg = TrainingConfig(
        learning_rate=_get(cp, section, "learning_rate", float, default=0.005),
        epochs=_get(cp, section, "epochs", int, default=50),
        batch_size=_get(cp, section, "batch_size", int, default=64),
        dataset_size=_get(cp, section, "dataset_size", int, default=200_000),
        snr_range_db=(
            _get(cp, section, "snr_min_db", float, default=-30.0),
            _get(cp, section, "snr_max_db", float, default=-10.0),
        ),
        seed=cfg_seed,
        feature_mode=fmode,
    )
    model_out = Path(out) if out else Path(
        _get(cp, section, "model_out", default=f"{section}.rlm")
    )
    log_out = Path(_get(cp, section, "log_out", default=str(model_out) + ".train.csv"))

    params, losses = train_network(scenario, cfg)
    model_out.parent.mkdir(parents=True, exist_ok=True)
    save_model(
        params, model_out, scheme=scenario.scheme, nr=scenario.nr, n=scenario.n,
        feature_mode=scenario.feature_mode,
    )
    hidden = "-".join(str(h) for h in HIDDEN_LAYERS[scenario.scheme])
    log_out.parent.mkdir(parents=True, exist_ok=True)
    with open(log_out, "w", newline="", encoding="utf-8") as fh:
        fh.write("# rislink training log v1\n")
        fh.write(
            f"# scheme={scenario.scheme} m={scenario.m} nr={scenario.nr} "
            f"n={scenario.n} hidden={hidden} learning_rate={cfg.learning_rate:g} "
            f"epochs={cfg.epochs} batch_size={cfg.batch_size} "
            f"dataset_size={cfg.dataset_size} "
            f"snr_range_db=[{cfg.snr_range_db[0]:g},{cfg.snr_range_db[1]:g}] "
            f"seed={cfg.seed} feature_mode={cfg.feature_mode}\n"
        )
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(losses, start=1):
            writer.writerow([epoch, repr(loss)])
    return model_out, log_out


def emit_plot_data(csv_path: str, out_dir: str | None = None) -> list[Path]:
    """Split a run CSV into per-(detector, experiment) two-column series files."""
    src = Path(csv_path)
    try:
        with open(src, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read CSV {src}: {exc}") from exc
    body = [
        (i + 1, line) for i, line in enumerate(lines)
        if line.strip() and not line.startswith("#")
    ]
    if not body:
        raise FormatError(f"{src}: no CSV body")
    header_no, header = body[0]
    if [c.strip() for c in header.split(",")] != CSV_COLUMNS:
        raise FormatError(f"{src}:{header_no}: unexpected header {header!r}")
    col = {name: i for i, name in enumerate(CSV_COLUMNS)}
    groups: dict[tuple[str, str], list[tuple[str, str]]] = {}
    for line_no, line in body[1:]:
        cells = next(csv.reader([line]))
        if len(cells) != len(CSV_COLUMNS):
            raise FormatError(
                f"{src}:{line_no}: expected {len(CSV_COLUMNS)} columns, got {len(cells)}"
            )
        try:
            float(cells[col["snr_db"]])
            float(cells[col["ber"]])
        except ValueError as exc:
            raise FormatError(f"{src}:{line_no}: non-numeric snr_db/ber: {exc}") from exc
        key = (cells[col["scenario_id"]], cells[col["detector"]])
        groups.setdefault(key, []).append((cells[col["snr_db"]], cells[col["ber"]]))
    if not groups:
        raise FormatError(f"{src}: no data rows")
    dest_dir = Path(out_dir) if out_dir else src.parent
    dest_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for (scenario_id, detector), points in sorted(groups.items()):
        dest = dest_dir / f"{src.stem}__{scenario_id}__{detector}.csv"
        zero_rows = sum(1 for _, ber in points if float(ber) == 0.0)
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# rislink plot series scenario={scenario_id} detector={detector}\n")
            if zero_rows:
                fh.write(
                    f"# {zero_rows} ber=0 row(s) kept as-is; clip before log-scale plots\n"
                )
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["snr_db", "ber"])
            writer.writerows(points)
        written.append(dest)
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rislink",
        description="Monte Carlo BER experiments for RIS-assisted received SM/SSK",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a BER experiment config or preset")
    run_p.add_argument("config", help=f"config file path or preset name {PRESETS}")
    run_p.add_argument("--seed", type=int, help="override every section's seed")
    run_p.add_argument("--out", help="output CSV path")
    run_p.add_argument("--model", help="override the B-DNN model path")
    run_p.add_argument("--feature-mode", choices=list(FEATURE_MODES))
    run_p.add_argument("--min-errors", type=int, help="stop rule: minimum bit errors")
    run_p.add_argument("--max-bits", type=int, help="stop rule: maximum bits per point")
    run_p.add_argument("--workers", type=int, default=1, help="parallel batch workers")
    run_p.add_argument(
        "--train-missing", action="store_true",
        help="train and persist any missing B-DNN model before running",
    )

    train_p = sub.add_parser("train", help="train a B-DNN classifier from a config")
    train_p.add_argument("config")
    train_p.add_argument("--seed", type=int)
    train_p.add_argument("--out", help="model output path")
    train_p.add_argument("--feature-mode", choices=list(FEATURE_MODES))

    plot_p = sub.add_parser("plot-data", help="split a run CSV into plot series")
    plot_p.add_argument("csv")
    plot_p.add_argument("--out-dir")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            out = run_experiment(
                args.config, seed=args.seed, out=args.out, model=args.model,
                feature_mode=args.feature_mode, min_errors=args.min_errors,
                max_bits=args.max_bits, workers=args.workers,
                train_missing=args.train_missing,
            )
            print(out)
        elif args.command == "train":
            model_out, log_out = train_model(
                args.config, seed=args.seed, out=args.out,
                feature_mode=args.feature_mode,
            )
            print(model_out)
            print(log_out)
        else:
            for path in emit_plot_data(args.csv, args.out_dir):
                print(path)
    except RislinkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
