"""Command line entry points: run, validate, compare.

A run is described by one JSON config file; the resolved config (defaults
materialized, overrides applied, paths absolute) is archived into the output
directory so re-running the archived file reproduces the run byte for byte.
Log verbosity comes from the FEDSYNTH_LOG environment variable.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import subprocess
import sys
import threading
from dataclasses import dataclass
from pathlib import Path

from .data import (
    ColumnKind,
    DataError,
    ScenarioKind,
    ScenarioSpec,
    Table,
    load_csv,
    partition,
)
from .encoders import EncodingError, build_layout
from .evaluation import EvaluationError, MetricsLog, SimilarityScore, similarity_score
from .federation import CentralizedRun, FederationConfig, Federator, run_client
from .federation.engine import _schema_from_cols, aggregate_encoders, local_column_stats
from .federation.messages import WireError
from .federation.transport import ProtocolError, inproc_pair, tcp_accept, tcp_connect, tcp_listen
from .gan import GanConfig, sample_synthetic
from .report import render_comparison_figure, render_run_figures
from .seeding import derive_seed
from .similarity import FUSIONS

logger = logging.getLogger(__name__)

LOG_ENV_VAR = "FEDSYNTH_LOG"

_GAN_KEYS = {
    "noise_dim",
    "gen_hidden",
    "disc_hidden",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "gumbel_tau",
    "label_smoothing",
}
_FED_KEYS = {"local_epochs", "swap_interval", "weight_fusion", "wd_sample_n", "max_modes"}
_TOP_KEYS = {
    "data",
    "scenario",
    "mode",
    "seed",
    "rounds",
    "eval",
    "synthetic_rows",
    "transport",
    "gan",
    "federation",
    "out_dir",
}


class ConfigError(ValueError):
    """The run configuration is malformed or inconsistent."""


@dataclass(frozen=True)
class RunConfig:
    """One experiment, fully resolved."""

    data_path: str
    schema_hint: dict[str, ColumnKind] | None
    scenario: ScenarioSpec | None
    fed: FederationConfig
    rounds: int
    eval_every: int
    eval_rows: int | None
    synthetic_rows: int | None
    transport: str
    tcp_host: str
    tcp_port: int
    out_dir: str | None
    seed: int

    @property
    def mode(self) -> str:
        return self.fed.mode

    def to_json_dict(self) -> dict:
        """The archival form: a standalone config reproducing this run."""
        out: dict = {"data": {"path": self.data_path}}
        if self.schema_hint is not None:
            out["data"]["schema"] = {k: v.value for k, v in self.schema_hint.items()}
        if self.scenario is not None:
            out["scenario"] = {
                "kind": self.scenario.kind.value,
                "clients": self.scenario.client_count,
                "seed": self.scenario.seed,
            }
            if self.scenario.sizes is not None:
                out["scenario"]["sizes"] = list(self.scenario.sizes)
        gan = self.fed.gan
        out.update(
            {
                "mode": self.fed.mode,
                "seed": self.seed,
                "rounds": self.rounds,
                "eval": {"every": self.eval_every, "rows": self.eval_rows},
                "synthetic_rows": self.synthetic_rows,
                "transport": {"kind": self.transport, "host": self.tcp_host, "port": self.tcp_port},
                "gan": {
                    "noise_dim": gan.noise_dim,
                    "gen_hidden": list(gan.gen_hidden),
                    "disc_hidden": list(gan.disc_hidden),
                    "batch_size": gan.batch_size,
                    "lr": gan.lr,
                    "beta1": gan.beta1,
                    "beta2": gan.beta2,
                    "adam_eps": gan.adam_eps,
                    "gumbel_tau": gan.gumbel_tau,
                    "label_smoothing": gan.label_smoothing,
                },
                "federation": {
                    "local_epochs": self.fed.local_epochs,
                    "swap_interval": self.fed.swap_interval,
                    "weight_fusion": self.fed.weight_fusion,
                    "wd_sample_n": self.fed.wd_sample_n,
                    "max_modes": self.fed.max_modes,
                },
                "out_dir": self.out_dir,
            }
        )
        return out


def _require(raw: dict, section: str, allowed: set[str]) -> None:
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {sorted(unknown)}")


def _expect(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def parse_config(
    raw: dict,
    base_dir: Path | None = None,
    seed_override: int | None = None,
    out_override: str | None = None,
) -> RunConfig:
    """Resolve a raw config dict; relative paths resolve against base_dir."""
    _expect(isinstance(raw, dict), "config root must be an object")
    _require(raw, "config", _TOP_KEYS)
    base = Path(base_dir) if base_dir is not None else Path.cwd()

    data = raw.get("data")
    _expect(isinstance(data, dict), "config needs a data section with a path")
    _require(data, "data", {"path", "schema"})
    _expect(isinstance(data.get("path"), str) and data["path"], "data.path must be a string")
    data_path = str((base / data["path"]).resolve()) if not os.path.isabs(data["path"]) else data["path"]

    schema_hint = None
    if data.get("schema") is not None:
        _expect(isinstance(data["schema"], dict), "data.schema must map column to kind")
        schema_hint = {}
        for name, kind in data["schema"].items():
            try:
                schema_hint[name] = ColumnKind(kind)
            except ValueError:
                raise ConfigError(
                    f"data.schema[{name!r}]: {kind!r} is not 'categorical' or 'continuous'"
                ) from None

    seed = raw.get("seed", 0)
    _expect(isinstance(seed, int), "seed must be an integer")
    if seed_override is not None:
        seed = seed_override

    mode = raw.get("mode", "fed")

    scenario = None
    if raw.get("scenario") is not None:
        sc = raw["scenario"]
        _expect(isinstance(sc, dict), "scenario must be an object")
        _require(sc, "scenario", {"kind", "clients", "sizes", "seed"})
        try:
            kind = ScenarioKind(sc.get("kind"))
        except ValueError:
            raise ConfigError(
                f"scenario.kind {sc.get('kind')!r} is not one of "
                f"{[k.value for k in ScenarioKind]}"
            ) from None
        clients = sc.get("clients")
        _expect(isinstance(clients, int) and clients >= 1, "scenario.clients must be >= 1")
        sizes = sc.get("sizes")
        if sizes is not None:
            _expect(
                isinstance(sizes, list) and all(isinstance(s, int) for s in sizes),
                "scenario.sizes must be a list of integers",
            )
            sizes = tuple(sizes)
        scenario_seed = sc.get("seed", seed)
        _expect(isinstance(scenario_seed, int), "scenario.seed must be an integer")
        try:
            scenario = ScenarioSpec(kind, clients, sizes, scenario_seed)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"scenario: {exc}") from None
    elif mode != "centralized":
        raise ConfigError(f"mode {mode!r} requires a scenario section")

    rounds = raw.get("rounds")
    _expect(isinstance(rounds, int) and rounds >= 1, "rounds must be a positive integer")

    eval_raw = raw.get("eval", {})
    _expect(isinstance(eval_raw, dict), "eval must be an object")
    _require(eval_raw, "eval", {"every", "rows"})
    eval_every = eval_raw.get("every", 1)
    _expect(isinstance(eval_every, int) and eval_every >= 1, "eval.every must be >= 1")
    eval_rows = eval_raw.get("rows")
    _expect(
        eval_rows is None or (isinstance(eval_rows, int) and eval_rows >= 1),
        "eval.rows must be a positive integer or null",
    )

    synthetic_rows = raw.get("synthetic_rows")
    _expect(
        synthetic_rows is None or (isinstance(synthetic_rows, int) and synthetic_rows >= 1),
        "synthetic_rows must be a positive integer or null",
    )

    transport_raw = raw.get("transport", {})
    _expect(isinstance(transport_raw, dict), "transport must be an object")
    _require(transport_raw, "transport", {"kind", "host", "port"})
    transport = transport_raw.get("kind", "inproc")
    _expect(transport in ("inproc", "tcp"), f"transport.kind {transport!r} must be inproc or tcp")
    tcp_host = transport_raw.get("host", "127.0.0.1")
    tcp_port = transport_raw.get("port", 0)
    _expect(isinstance(tcp_host, str), "transport.host must be a string")
    _expect(isinstance(tcp_port, int) and 0 <= tcp_port < 65536, "transport.port must be 0..65535")

    gan_raw = raw.get("gan", {})
    _expect(isinstance(gan_raw, dict), "gan must be an object")
    _require(gan_raw, "gan", _GAN_KEYS)
    gan_kwargs = dict(gan_raw)
    for key in ("gen_hidden", "disc_hidden"):
        if key in gan_kwargs:
            _expect(
                isinstance(gan_kwargs[key], list)
                and all(isinstance(w, int) and w >= 1 for w in gan_kwargs[key]),
                f"gan.{key} must be a list of positive integers",
            )
            gan_kwargs[key] = tuple(gan_kwargs[key])
    try:
        gan = GanConfig(seed=seed, **gan_kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"gan: {exc}") from None

    fed_raw = raw.get("federation", {})
    _expect(isinstance(fed_raw, dict), "federation must be an object")
    _require(fed_raw, "federation", _FED_KEYS)
    if "weight_fusion" in fed_raw:
        _expect(
            fed_raw["weight_fusion"] in FUSIONS,
            f"federation.weight_fusion must be one of {list(FUSIONS)}",
        )
    try:
        fed = FederationConfig(gan=gan, mode=mode, **fed_raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"federation: {exc}") from None

    out_dir = out_override if out_override is not None else raw.get("out_dir")
    if out_dir is not None:
        _expect(isinstance(out_dir, str) and out_dir, "out_dir must be a non-empty string")
        if not os.path.isabs(out_dir):
            out_dir = str((base / out_dir).resolve())

    return RunConfig(
        data_path=data_path,
        schema_hint=schema_hint,
        scenario=scenario,
        fed=fed,
        rounds=rounds,
        eval_every=eval_every,
        eval_rows=eval_rows,
        synthetic_rows=synthetic_rows,
        transport=transport,
        tcp_host=tcp_host,
        tcp_port=tcp_port,
        out_dir=out_dir,
        seed=seed,
    )


def load_config(
    path: str | Path, seed_override: int | None = None, out_override: str | None = None
) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, path.parent, seed_override, out_override)


# ---------------------------------------------------------------------- run


def _write_csv_table(path: Path, table: Table) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([meta.name for meta in table.schema])
        columns = []
        for meta in table.schema:
            values = table.column(meta.name)
            if meta.kind is ColumnKind.CONTINUOUS:
                columns.append([repr(float(v)) for v in values])
            else:
                columns.append([str(v) for v in values])
        for row in zip(*columns):
            writer.writerow(row)


def _json_dump(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _spawn_inproc(cfg: RunConfig, shards: list[Table]):
    channels = []
    threads = []
    for cid, shard in enumerate(shards):
        ours, theirs = inproc_pair()
        thread = threading.Thread(
            target=run_client,
            args=(cid, shard, cfg.fed, theirs),
            name=f"client-{cid}",
            daemon=True,
        )
        thread.start()
        channels.append(ours)
        threads.append(thread)

    def closer():
        for thread in threads:
            thread.join(timeout=30)

    return channels, closer


def _spawn_tcp(cfg: RunConfig, config_path: Path, seed_override: int | None):
    assert cfg.scenario is not None
    listener = tcp_listen(cfg.tcp_host, cfg.tcp_port)
    port = listener.getsockname()[1]
    procs = []
    base_cmd = [sys.executable, "-m", "fedsynth", "client-worker", "--config", str(config_path)]
    if seed_override is not None:
        base_cmd += ["--seed-override", str(seed_override)]
    for cid in range(cfg.scenario.client_count):
        procs.append(
            subprocess.Popen(base_cmd + ["--client", str(cid), "--host", cfg.tcp_host, "--port", str(port)])
        )
    try:
        channels = tcp_accept(listener, len(procs))
    except Exception:
        for proc in procs:
            proc.kill()
        raise
    finally:
        listener.close()

    def closer():
        for proc in procs:
            try:
                proc.wait(timeout=30)
            except subprocess.TimeoutExpired:
                proc.kill()

    return channels, closer


def _weights_payload(run, cfg: RunConfig) -> dict:
    payload: dict = {
        "mode": cfg.mode,
        "clients": len(run.weights),
        "row_counts": list(run.row_counts),
        "weights": [float(w) for w in run.weights],
    }
    if run.weight_trace is not None:
        payload["trace"] = run.weight_trace.to_json_dict()
        payload["divergence"] = {
            "columns": list(run.divergence.columns),
            "entries": run.divergence.entries.tolist(),
        }
    return payload


def cmd_run(args: argparse.Namespace) -> int:
    config_path = Path(args.config)
    cfg = load_config(config_path, args.seed_override, args.out)
    if cfg.out_dir is None:
        raise ConfigError("no output directory: set out_dir in the config or pass --out")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    table = load_csv(cfg.data_path, cfg.schema_hint)
    _json_dump(out / "config.json", cfg.to_json_dict())

    closer = None
    if cfg.mode == "centralized":
        run = CentralizedRun(table, cfg.fed)
    else:
        assert cfg.scenario is not None
        shards = partition(table, cfg.scenario)
        if cfg.transport == "tcp":
            channels, closer = _spawn_tcp(cfg, config_path, args.seed_override)
        else:
            channels, closer = _spawn_inproc(cfg, shards)
        run = Federator(channels, cfg.fed)
        run.initialize()
    logger.info(
        "initialized mode=%s clients=%d rows=%d encoded_width=%d",
        cfg.mode,
        len(run.weights),
        table.n_rows,
        run.layout.width,
    )

    _json_dump(out / "weights.json", _weights_payload(run, cfg))

    metrics = MetricsLog(out / "metrics.csv")
    eval_rows = cfg.eval_rows if cfg.eval_rows is not None else table.n_rows
    last_score: list[SimilarityScore] = []

    def evaluate(run_obj, round_index: int) -> SimilarityScore:
        synth = sample_synthetic(
            run_obj.model,
            eval_rows,
            run_obj.layout,
            run_obj.encoders,
            cfg.fed.gan,
            derive_seed(cfg.seed, "eval", round_index),
        )
        score = similarity_score(table, synth)
        last_score[:] = [score]
        return score

    score = evaluate(run, 0)
    metrics.append(0, 0.0, score.avg_jsd, score.avg_wd, None, None)

    def hook(run_obj, record) -> None:
        due = record.round % cfg.eval_every == 0 or record.round == cfg.rounds
        round_score = evaluate(run_obj, record.round) if due else None
        metrics.append(
            record.round,
            run_obj.clock_s,
            round_score.avg_jsd if round_score else None,
            round_score.avg_wd if round_score else None,
            record.mean_gen_loss,
            record.mean_disc_loss,
        )
        if due:
            logger.info(
                "round %d clock=%.3fs avg_jsd=%s avg_wd=%s",
                record.round,
                run_obj.clock_s,
                round_score.avg_jsd,
                round_score.avg_wd,
            )

    try:
        run.train(cfg.rounds, hook)
        synth_rows = cfg.synthetic_rows if cfg.synthetic_rows is not None else table.n_rows
        synth = sample_synthetic(
            run.model,
            synth_rows,
            run.layout,
            run.encoders,
            cfg.fed.gan,
            derive_seed(cfg.seed, "synthetic"),
        )
        _write_csv_table(out / "synthetic.csv", synth)
    finally:
        run.close()
        if closer is not None:
            closer()

    final = last_score[0]
    _json_dump(
        out / "summary.json",
        {
            "mode": cfg.mode,
            "rounds": cfg.rounds,
            "avg_jsd": final.avg_jsd,
            "avg_wd": final.avg_wd,
            "wall_clock_s": run.clock_s,
            "bytes_sent": run.bytes_sent,
            "bytes_received": run.bytes_received,
            "message_counts": run.message_counts(),
            "clients": len(run.weights),
            "rows": table.n_rows,
            "encoded_width": run.layout.width,
            "schema": [[meta.name, meta.kind.value] for meta in table.schema],
        },
    )
    _json_dump(out / "rounds.json", [record.to_json_dict() for record in run.records])
    render_run_figures(out / "metrics.csv", out / "figures")

    def show(value: float | None) -> str:
        return "n/a" if value is None else f"{value:.4f}"

    print(f"mode={cfg.mode} rounds={cfg.rounds} clients={len(run.weights)}")
    print(f"final avg_jsd={show(final.avg_jsd)} avg_wd={show(final.avg_wd)} clock={run.clock_s:.3f}s")
    print(f"outputs in {out}")
    return 0


# ----------------------------------------------------------------- validate


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.seed_override, args.out)
    table = load_csv(cfg.data_path, cfg.schema_hint)
    kinds = [meta.kind for meta in table.schema]
    n_cat = sum(1 for k in kinds if k is ColumnKind.CATEGORICAL)
    n_cont = len(kinds) - n_cat
    print(f"data: {cfg.data_path}")
    print(f"  {table.n_rows} rows, {table.n_cols} columns ({n_cat} categorical, {n_cont} continuous)")

    if cfg.mode == "centralized":
        shards = [table]
        print("scenario: none (centralized)")
    else:
        assert cfg.scenario is not None
        shards = partition(table, cfg.scenario)
        sizes = [s.n_rows for s in shards]
        print(f"scenario: {cfg.scenario.kind.value} clients={cfg.scenario.client_count} sizes={sizes}")

    batch = cfg.fed.gan.batch_size
    for cid, shard in enumerate(shards):
        if shard.n_rows < batch:
            raise ConfigError(
                f"client {cid} has {shard.n_rows} rows, fewer than one batch of {batch}"
            )

    stats = [local_column_stats(shard, cfg.fed, cid) for cid, shard in enumerate(shards)]
    schema_cols = [(name, kind) for name, kind, _ in stats[0]]
    per_client = [{name: s for name, _, s in cols} for cols in stats]
    encoders, _ = aggregate_encoders(schema_cols, per_client, [s.n_rows for s in shards], cfg.fed)
    layout = build_layout(_schema_from_cols(schema_cols), encoders)

    steps = [s.n_rows // batch for s in shards]
    print(f"mode: {cfg.mode}  rounds: {cfg.rounds}  local epochs per round: {cfg.fed.local_epochs}")
    print(f"encoded width: {layout.width}")
    print(f"batches per epoch per client: {steps}")
    if cfg.mode == "md":
        gen_steps = cfg.rounds * cfg.fed.local_epochs * min(steps)
        print(f"expected generator steps: {gen_steps} (shared generator, per-client discriminators)")
    elif cfg.mode == "centralized":
        print(f"expected optimizer epochs: {cfg.rounds * cfg.fed.local_epochs}")
    else:
        print(f"expected aggregations: {cfg.rounds} (weighted average per round)")
    print("config ok")
    return 0


# ------------------------------------------------------------------ compare


def cmd_compare(args: argparse.Namespace) -> int:
    rows = []
    schema = None
    schema_origin = None
    for dir_name in args.run_dirs:
        run_dir = Path(dir_name)
        summary_path = run_dir / "summary.json"
        if not summary_path.is_file():
            raise ConfigError(f"missing summary.json in {run_dir}")
        try:
            summary = json.loads(summary_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"corrupt summary.json in {run_dir}: {exc}") from exc
        if schema is None:
            schema = summary.get("schema")
            schema_origin = run_dir
        elif summary.get("schema") != schema:
            raise ConfigError(
                f"schema in {run_dir} does not match {schema_origin}; runs are not comparable"
            )
        rows.append(
            {
                "run": run_dir.name,
                "dir": run_dir,
                "mode": summary.get("mode", "?"),
                "avg_jsd": summary.get("avg_jsd"),
                "avg_wd": summary.get("avg_wd"),
            }
        )

    def minima(key: str) -> set[int]:
        values = [(i, r[key]) for i, r in enumerate(rows) if r[key] is not None]
        if not values:
            return set()
        best = min(v for _, v in values)
        return {i for i, v in values if v == best}

    best_jsd = minima("avg_jsd")
    best_wd = minima("avg_wd")

    def cell(value: float | None, marked: bool) -> str:
        if value is None:
            return "n/a"
        return f"{value:.6f}" + (" *" if marked else "")

    name_w = max(len(r["run"]) for r in rows)
    mode_w = max(len(r["mode"]) for r in rows)
    print(f"{'run':<{name_w}}  {'mode':<{mode_w}}  {'avg_jsd':>12}  {'avg_wd':>12}")
    for i, r in enumerate(rows):
        print(
            f"{r['run']:<{name_w}}  {r['mode']:<{mode_w}}  "
            f"{cell(r['avg_jsd'], i in best_jsd):>12}  {cell(r['avg_wd'], i in best_wd):>12}"
        )
    print("(* marks the per-metric minimum)")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "comparison.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["run", "mode", "avg_jsd", "avg_wd", "best_avg_jsd", "best_avg_wd"])
        for i, r in enumerate(rows):
            writer.writerow(
                [
                    r["run"],
                    r["mode"],
                    "" if r["avg_jsd"] is None else repr(r["avg_jsd"]),
                    "" if r["avg_wd"] is None else repr(r["avg_wd"]),
                    "yes" if i in best_jsd else "no",
                    "yes" if i in best_wd else "no",
                ]
            )

    curves = []
    for r in rows:
        metrics_path = r["dir"] / "metrics.csv"
        if metrics_path.is_file():
            curves.append((f"{r['run']} ({r['mode']})", MetricsLog.read(metrics_path)))
    if curves:
        render_comparison_figure(curves, out / "comparison.png")
    print(f"comparison written to {out}")
    return 0


# ------------------------------------------------------------ worker (tcp)


def cmd_client_worker(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.seed_override, None)
    if cfg.scenario is None:
        raise ConfigError("client-worker requires a scenario")
    if not 0 <= args.client < cfg.scenario.client_count:
        raise ConfigError(f"client index {args.client} out of range")
    table = load_csv(cfg.data_path, cfg.schema_hint)
    shard = partition(table, cfg.scenario)[args.client]
    channel = tcp_connect(args.host, args.port)
    run_client(args.client, shard, cfg.fed, channel)
    return 0


# --------------------------------------------------------------- dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsynth",
        description="Federated training of tabular GANs with similarity-weighted aggregation.",
    )
    sub = parser.add_subparsers(dest="command", metavar="{run,validate,compare}")

    run_p = sub.add_parser("run", help="execute one experiment from a config file")
    run_p.add_argument("--config", required=True, help="path to the JSON run config")
    run_p.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    run_p.add_argument("--seed-override", type=int, default=None, help="replace the config seed")
    run_p.set_defaults(func=cmd_run)

    val_p = sub.add_parser("validate", help="check a config and print the experiment plan")
    val_p.add_argument("--config", required=True)
    val_p.add_argument("--out", default=None)
    val_p.add_argument("--seed-override", type=int, default=None)
    val_p.set_defaults(func=cmd_validate)

    cmp_p = sub.add_parser("compare", help="tabulate final similarity across run directories")
    cmp_p.add_argument("run_dirs", nargs="+", metavar="RUN_DIR")
    cmp_p.add_argument("--out", default=".", help="directory for comparison.csv and comparison.png")
    cmp_p.set_defaults(func=cmd_compare)

    worker_p = sub.add_parser("client-worker")  # internal: spawned by run for tcp transport
    worker_p.add_argument("--config", required=True)
    worker_p.add_argument("--client", type=int, required=True)
    worker_p.add_argument("--host", required=True)
    worker_p.add_argument("--port", type=int, required=True)
    worker_p.add_argument("--seed-override", type=int, default=None)
    worker_p.set_defaults(func=cmd_client_worker)

    return parser


def _setup_logging() -> None:
    level_name = os.environ.get(LOG_ENV_VAR, "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except (
        ConfigError,
        DataError,
        EncodingError,
        EvaluationError,
        ProtocolError,
        WireError,
        OSError,
        ValueError,
    ) as exc:
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
