"""Command-line entry point: ``drofit <command> [--config FILE] [flags]``.

Configuration files are line-oriented ``key = value`` text with a mandatory
``schema_version`` line.  Keys are ``model.<field>`` (ModelConfig, on top of
the ``model.preset`` base), ``train.<field>`` (TrainConfig) and a few plain
keys such as ``seed`` and ``sample_rate``.  ``--config`` also accepts the
preset names ``default`` and ``tiny``.  Command flags and ``--set KEY=VALUE``
override the file.  Every run prints its effective configuration and writes a
RunManifest (JSON) plus the effective configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import ast
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, DrofitError, NumericError, ShapeError, StreamError

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
PRESETS = ("default", "tiny")


class UsageError(DrofitError):
    """Bad command line: unknown flag, missing argument, malformed value."""


# -- configuration ------------------------------------------------------------------

def parse_value(text: str):
    """Config value literal: numbers, tuples (``32,56,32``), ``none``, ``true``/``false`` or a string."""
    text = text.strip()
    lowered = text.lower()
    if lowered in ("none", "null"):
        return None
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (tuple, list)):
        return repr(tuple(value)) if any(isinstance(v, (tuple, list)) for v in value) else \
            ",".join(format_value(v) for v in value) + ("," if len(value) == 1 else "")
    return str(value)


def read_config(source: str | None) -> dict[str, object]:
    """Raw key -> value map from a preset name or a config file."""
    if source is None:
        return {}
    if source in PRESETS:
        return {"schema_version": SCHEMA_VERSION, "model.preset": source}
    path = Path(source)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {source}: {exc}") from exc
    values: dict[str, object] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = parse_value(value)
    version = values.get("schema_version")
    if version != SCHEMA_VERSION:
        raise UsageError(f"{source}: schema_version {version!r} unsupported, expected {SCHEMA_VERSION}")
    return values


def model_config(values: dict):
    from .model import ModelConfig

    preset = values.get("model.preset", "default")
    if preset not in PRESETS:
        raise UsageError(f"unknown model preset {preset!r}; choose from {', '.join(PRESETS)}")
    base = ModelConfig.tiny() if preset == "tiny" else ModelConfig()
    changes = {k[len("model."):]: v for k, v in values.items() if k.startswith("model.") and k != "model.preset"}
    try:
        return ModelConfig.from_dict({**base.to_dict(), **changes}).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def train_config(values: dict):
    from .trainer import TrainConfig

    names = {f.name for f in dataclasses.fields(TrainConfig)}
    changes = {k[len("train."):]: v for k, v in values.items() if k.startswith("train.")}
    unknown = set(changes) - names
    if unknown:
        raise UsageError(f"unknown train keys: {', '.join(sorted(unknown))}")
    if "betas" in changes:
        changes["betas"] = tuple(changes["betas"])
    return TrainConfig(**changes)


def effective_lines(values: dict) -> list[str]:
    return [f"{k} = {format_value(values[k])}" for k in sorted(values, key=lambda k: (k != "schema_version", k))]


# -- run manifest ---------------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    timestamp: str = ""
    argv: list[str] = field(default_factory=list)

    def write(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{self.command}.manifest.json"
        data = dataclasses.asdict(self)
        data["config"] = {k: _jsonable(v) for k, v in self.config.items()}
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        (directory / f"{self.command}.config").write_text("\n".join(effective_lines(self.config)) + "\n")
        return path


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    return value


# -- argument parsing -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file or preset name (default, tiny)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; repeatable")
    p.add_argument("--quiet", action="store_true", help="do not print the effective config")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="drofit", description="Drone-noise speech enhancement toolkit.")
    parser.add_argument("--version", action="version", version=f"drofit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-clean", help="write speech-like synthetic clean utterances")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, help="number of utterances")
    p.add_argument("--duration", type=float, help="seconds per utterance")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("mix", help="build a mixture manifest and write mixtures")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--clean", help="directory of clean 16 kHz WAVs (default: synthetic voices)")
    p.add_argument("--synth-voices", type=int, help="number of synthetic voices when --clean is absent")
    p.add_argument("--noise", nargs="+", help="long drone-noise WAVs")
    p.add_argument("--synth-drone", action="store_true", help="use the synthetic rotor-noise generator")
    p.add_argument("--snrs", help="comma-separated SNR ladder (dB) for the main split")
    p.add_argument("--per-snr", type=int, help="mixtures per SNR in the main split")
    p.add_argument("--split", help="name of the main split (default train)")
    p.add_argument("--test-snrs", help="comma-separated SNR ladder for a test split")
    p.add_argument("--test-per-snr", type=int, help="mixtures per SNR in the test split")
    p.add_argument("--holdout", help="glob of clean stems reserved for the test split")
    p.add_argument("--duration", type=float, help="seconds per mixture")
    p.add_argument("--seed", type=int)
    p.add_argument("--no-audio", action="store_true", help="write the manifest only")

    p = sub.add_parser("train", help="train a model on a mixture manifest")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="directory for checkpoints and the log")
    p.add_argument("--split", help="training split (default train)")
    p.add_argument("--val-split", help="validation split (default val, skipped if absent)")
    p.add_argument("--init", help="start from this checkpoint's parameters")
    p.add_argument("--resume", help="resume optimizer state and step from a checkpoint")
    for name, kind in (("lr", float), ("epochs", int), ("batch-size", int), ("seed", int), ("alpha", float),
                       ("beta", float), ("val-every", int), ("max-steps", int), ("grad-clip", float),
                       ("eps", float)):
        p.add_argument(f"--{name}", type=kind)

    p = sub.add_parser("enhance", help="enhance one WAV file offline")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--precision", choices=("float32", "float64"))

    p = sub.add_parser("stream", help="enhance a WAV file or raw PCM stream chunk by chunk")
    _add_common(p)
    p.add_argument("input", help="WAV path, raw PCM path, or - for standard input")
    p.add_argument("output", help="output path, or - for standard output")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--chunk-frames", type=int, help="frames per network call")
    p.add_argument("--push-size", type=int, help="samples read per push")
    p.add_argument("--format", choices=("wav", "f32", "s16"), help="input/output sample format")
    p.add_argument("--precision", choices=("float32", "float64"))
    p.add_argument("--report", help="write the latency report (JSON) here")

    p = sub.add_parser("eval", help="score a model on a manifest split, per SNR")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", help="split to score (default test)")
    p.add_argument("--out", help="directory for the report files")

    p = sub.add_parser("analyze", help="parameter / MAC breakdown and complexity comparison")
    _add_common(p)
    p.add_argument("--frames", type=int, help="STFT frames (default 157, a 5 s utterance)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="directory for the report files")
    return parser


# Flag -> config key, per command; flags left unset do not override the file.
_FLAG_KEYS = {
    "synth-clean": {"count": "count", "duration": "duration_s", "seed": "seed"},
    "mix": {"snrs": "snrs", "per_snr": "per_snr", "split": "split", "test_snrs": "test_snrs",
            "test_per_snr": "test_per_snr", "holdout": "holdout", "duration": "duration_s", "seed": "seed",
            "synth_voices": "synth_voices"},
    "train": {"lr": "train.lr", "epochs": "train.epochs", "batch_size": "train.batch_size", "seed": "train.seed",
              "alpha": "train.alpha", "beta": "train.beta", "val_every": "train.val_every",
              "max_steps": "train.max_steps", "grad_clip": "train.grad_clip", "eps": "train.eps",
              "split": "split", "val_split": "val_split"},
    "enhance": {"precision": "precision"},
    "stream": {"chunk_frames": "chunk_frames", "push_size": "push_size", "format": "format",
               "precision": "precision"},
    "eval": {"split": "split"},
    "analyze": {"frames": "frames", "seed": "seed"},
}

_DEFAULTS = {
    "synth-clean": {"count": 10, "duration_s": 5.0, "seed": 0},
    "mix": {"snrs": (-5, -10, -15, -20, -25), "per_snr": 4, "split": "train", "test_snrs": None,
            "test_per_snr": 0, "holdout": None, "duration_s": 5.0, "seed": 0, "synth_voices": 20},
    "train": {"split": "train", "val_split": "val"},
    "enhance": {"precision": "float64"},
    "stream": {"chunk_frames": 1, "push_size": 512, "format": "wav", "precision": "float64"},
    "eval": {"split": "test"},
    "analyze": {"frames": 157, "seed": 0},
}


def resolve(args: argparse.Namespace) -> dict:
    values: dict[str, object] = {"schema_version": SCHEMA_VERSION, "sample_rate": 16000}
    values.update(_DEFAULTS.get(args.command, {}))
    values.update(read_config(args.config))
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = parse_value(value)
    for attr, key in _FLAG_KEYS.get(args.command, {}).items():
        flag = getattr(args, attr, None)
        if flag is not None:
            values[key] = parse_value(flag) if isinstance(flag, str) and key.endswith("snrs") else flag
    values["schema_version"] = SCHEMA_VERSION
    return values


def _ladder(value) -> tuple[float, ...]:
    if value is None:
        return ()
    if isinstance(value, (int, float)):
        return (float(value),)
    return tuple(float(v) for v in value)


def _announce(args, values: dict) -> None:
    if not args.quiet:
        print(f"# effective config ({args.command})", file=sys.stderr)
        for line in effective_lines(values):
            print(line, file=sys.stderr)


def _manifest(args, values, inputs, outputs, seed=None) -> RunManifest:
    return RunManifest(args.command, values, inputs, outputs, seed,
                       timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
                       argv=list(sys.argv[1:]) if args.argv is None else list(args.argv))


def _load_model(path, precision: str = "float64"):
    from .model import load_checkpoint

    try:
        model = load_checkpoint(path).model
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return model.astype(np.float32) if precision == "float32" else model


# -- commands ---------------------------------------------------------------------------

def cmd_synth_clean(args, values) -> int:
    from .data import save_wav, synth_speech

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i in range(int(values["count"])):
        wave = synth_speech(float(values["duration_s"]), int(values["sample_rate"]), seed=int(values["seed"]) + i)
        path = out / f"voice{i:04d}.wav"
        save_wav(path, wave, int(values["sample_rate"]))
        files.append(str(path))
    _manifest(args, values, {}, {"files": files}, int(values["seed"])).write(out)
    print(f"wrote {len(files)} utterances to {out}")
    return EXIT_OK


def cmd_mix(args, values) -> int:
    from .data import DroneNoiseSpec, build_manifest, materialize, save_wav

    if bool(args.noise) == bool(args.synth_drone):
        raise UsageError("choose exactly one of --noise FILES and --synth-drone")
    clean_source = args.clean if args.clean is not None else int(values["synth_voices"])
    noise_source = DroneNoiseSpec() if args.synth_drone else list(args.noise)
    ladders = {str(values["split"]): _ladder(values["snrs"])}
    counts = {str(values["split"]): int(values["per_snr"])}
    if values["test_snrs"] is not None and int(values["test_per_snr"]) > 0:
        ladders["test"], counts["test"] = _ladder(values["test_snrs"]), int(values["test_per_snr"])
    # Everything is validated here, before anything is written.
    manifest = build_manifest(clean_source, noise_source, ladders, counts, seed=int(values["seed"]),
                              holdout=values["holdout"], duration_s=float(values["duration_s"]),
                              sample_rate=int(values["sample_rate"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.jsonl"
    manifest.save(manifest_path)
    if not args.no_audio:
        for entry in manifest:
            clean, mixture, _ = materialize(entry, int(values["sample_rate"]))
            folder = out / entry.split
            folder.mkdir(exist_ok=True)
            save_wav(folder / f"{entry.id}.mix.wav", mixture, int(values["sample_rate"]))
            save_wav(folder / f"{entry.id}.clean.wav", clean, int(values["sample_rate"]))
    _manifest(args, values, {"clean": str(args.clean or "synthetic"), "noise": args.noise or "synthetic"},
              {"manifest": str(manifest_path), "mixtures": len(manifest)}, int(values["seed"])).write(out)
    print(f"wrote {len(manifest)} mixtures and {manifest_path}")
    return EXIT_OK


def cmd_train(args, values) -> int:
    from .data import MixtureManifest
    from .model import build_model, load_checkpoint
    from .trainer import examples_from_manifest, resume_from, train

    cfg = train_config(values)
    full = MixtureManifest.load(args.manifest)
    train_part = full.split(str(values["split"]))
    if not len(train_part):
        raise DataError(f"manifest {args.manifest} has no {values['split']!r} entries")
    val_part = full.split(str(values["val_split"]))
    state = None
    if args.resume:
        model, state = resume_from(args.resume)
    elif args.init:
        model = load_checkpoint(args.init).model
    else:
        model = build_model(model_config(values), seed=cfg.seed)
    values.update({f"model.{k}": v for k, v in model.config.to_dict().items()})
    values.update({f"train.{k}": v for k, v in dataclasses.asdict(cfg).items()})
    _announce(args, values)
    rate = int(values["sample_rate"])
    out = Path(args.out)
    result = train(model, examples_from_manifest(train_part, rate), cfg,
                   examples_from_manifest(val_part, rate) if len(val_part) else None,
                   log_path=out / "train_log.tsv", ckpt_dir=out, resume=state)
    outputs = {"last": str(out / "last.ckpt"), "log": str(out / "train_log.tsv"), "steps": result.optimizer.step}
    if result.best_step is not None:
        outputs.update(best=str(out / "best.ckpt"), best_step=result.best_step, best_val_loss=result.best_val_loss)
    _manifest(args, values, {"manifest": args.manifest, "init": args.init, "resume": args.resume},
              outputs, cfg.seed).write(out)
    last = result.log[-1] if result.log else None
    print(f"trained {result.optimizer.step} steps" + (f"; final loss {last.total:.4f}" if last else ""))
    return EXIT_OK


def cmd_enhance(args, values) -> int:
    from .data import load_wav, save_wav

    model = _load_model(args.ckpt, str(values["precision"]))
    _announce(args, values)
    wave = load_wav(args.input, model.config.sample_rate)
    out = model.enhance(wave)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite samples enhancing {args.input}")
    save_wav(args.output, out, model.config.sample_rate)
    _manifest(args, values, {"input": args.input, "ckpt": args.ckpt},
              {"output": args.output, "samples": int(out.size)}).write(Path(args.output).resolve().parent)
    print(f"enhanced {wave.size} samples -> {args.output}")
    return EXIT_OK


def _raw_reader(stream, fmt: str, push: int):
    width = 4 if fmt == "f32" else 2
    dtype = "<f4" if fmt == "f32" else "<i2"
    carry = b""
    while True:
        block = stream.read(push * width)
        if not block:
            break
        block = carry + block
        cut = len(block) - len(block) % width
        carry = block[cut:]
        samples = np.frombuffer(block[:cut], dtype=dtype).astype(np.float64)
        yield samples / 32768.0 if fmt == "s16" else samples
    if carry:
        raise DataError(f"raw input ends inside a sample ({len(carry)} stray bytes)")


def _raw_bytes(samples: np.ndarray, fmt: str) -> bytes:
    if fmt == "s16":
        return (np.clip(samples, -1.0, 32767 / 32768) * 32768).round().astype("<i2").tobytes()
    return samples.astype("<f4").tobytes()


def cmd_stream(args, values) -> int:
    from .data import load_wav, save_wav
    from .runtime import create_stream, flush, push_samples

    model = _load_model(args.ckpt, str(values["precision"]))
    _announce(args, values)
    fmt, push = str(values["format"]), int(values["push_size"])
    if push < 1:
        raise UsageError("--push-size must be >= 1")
    rate = model.config.sample_rate
    state = create_stream(model, int(values["chunk_frames"]))
    if fmt == "wav":
        if args.input == "-":
            raise UsageError("WAV input needs a file; use --format f32 or s16 for standard input")
        wave = load_wav(args.input, rate)
        blocks = (wave[i: i + push] for i in range(0, wave.size, push))
    else:
        source = sys.stdin.buffer if args.input == "-" else open(args.input, "rb")
        blocks = _raw_reader(source, fmt, push)
    to_stdout = args.output == "-"
    if to_stdout and fmt == "wav":
        raise UsageError("WAV output needs a file; use --format f32 or s16 for standard output")
    sink = sys.stdout.buffer if to_stdout else (None if fmt == "wav" else open(args.output, "wb"))
    collected = []
    for block in blocks:
        out = push_samples(state, block)
        if sink is not None:
            sink.write(_raw_bytes(out, fmt))
        else:
            collected.append(out)
    tail, report = flush(state)
    if sink is not None:
        sink.write(_raw_bytes(tail, fmt))
        sink.flush()
        if not to_stdout:
            sink.close()
    else:
        save_wav(args.output, np.concatenate(collected + [tail]), rate)
    summary = json.dumps(report.as_dict(), indent=2)
    print(summary, file=sys.stderr if to_stdout else sys.stdout)
    outputs = {"output": args.output, "latency": report.as_dict()}
    if args.report:
        Path(args.report).write_text(summary + "\n")
        outputs["report"] = args.report
    where = Path(args.report).resolve().parent if args.report else (
        Path.cwd() if to_stdout else Path(args.output).resolve().parent)
    _manifest(args, values, {"input": args.input, "ckpt": args.ckpt}, outputs).write(where)
    return EXIT_OK


def cmd_eval(args, values) -> int:
    from .data import MixtureManifest
    from .metrics import evaluate_set

    model = _load_model(args.ckpt)
    _announce(args, values)
    part = MixtureManifest.load(args.manifest).split(str(values["split"]))
    report = evaluate_set(part, model, int(values["sample_rate"]))
    _print_table(report.rows(), ["system", "snr_db", "count", "si_sdr_db", "stoi", "lsd_db"])
    outputs = {}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.tsv").write_text(report.to_delimited())
        (out / "eval.json").write_text(report.to_json() + "\n")
        outputs = {"tsv": str(out / "eval.tsv"), "json": str(out / "eval.json")}
    _manifest(args, values, {"manifest": args.manifest, "ckpt": args.ckpt}, outputs).write(
        Path(args.out) if args.out else Path(args.ckpt).resolve().parent)
    return EXIT_OK


def cmd_analyze(args, values) -> int:
    from .analysis import compare_to_reference, comparison_table, count_macs, instrumented_macs
    from .model import build_model

    cfg = model_config(values)
    values.update({f"model.{k}": v for k, v in cfg.to_dict().items()})
    _announce(args, values)
    model = build_model(cfg, seed=int(values["seed"]))
    frames = int(values["frames"])
    if frames < 1:
        raise UsageError("--frames must be >= 1")
    report = count_macs(model, frames)
    print("# per-layer")
    _print_table([{"layer": r.name, "params": r.params, "macs": r.macs} for r in report.rows],
                 ["layer", "params", "macs"])
    measured = sum(sum(k.values()) for k in instrumented_macs(model, frames).values())
    print("\n# summary")
    print(f"frames\t{frames}\nparams\t{report.total_params}\nmacs\t{report.total_macs}\n"
          f"macs_instrumented\t{measured}\nmacs_match\t{measured == report.total_macs}")
    print("\n# attention complexity (O-constants 1)")
    for key in ("eq1", "eq2", "eq3", "eq4", "eq1/eq2", "eq2/eq3", "eq3/eq4", "eq2/eq4"):
        value = report.attention[key]
        print(f"{key}\t{value:.4f}" if isinstance(value, float) else f"{key}\t{value}")
    print("\n# reference comparison")
    rows = compare_to_reference(report)
    print(comparison_table(rows), end="")
    outputs = {}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "cost.tsv").write_text(report.to_delimited())
        (out / "cost.json").write_text(report.to_json() + "\n")
        (out / "reference.tsv").write_text(comparison_table(rows))
        outputs = {"tsv": str(out / "cost.tsv"), "json": str(out / "cost.json"),
                   "reference": str(out / "reference.tsv")}
        _manifest(args, values, {}, outputs, int(values["seed"])).write(out)
    return EXIT_OK


def _print_table(rows: list[dict], columns: list[str]) -> None:
    widths = [max([len(c)] + [len(str(r[c])) for r in rows]) for c in columns]
    print("  ".join(c.ljust(w) for c, w in zip(columns, widths)))
    for r in rows:
        print("  ".join(str(r[c]).ljust(w) for c, w in zip(columns, widths)))


_COMMANDS = {"synth-clean": cmd_synth_clean, "mix": cmd_mix, "train": cmd_train, "enhance": cmd_enhance,
             "stream": cmd_stream, "eval": cmd_eval, "analyze": cmd_analyze}
# Commands that print their config only after loading a model or checkpoint.
_LATE_ANNOUNCE = {"train", "enhance", "stream", "eval", "analyze"}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.argv = argv
        values = resolve(args)
        if args.command not in _LATE_ANNOUNCE:
            _announce(args, values)
        return _COMMANDS[args.command](args, values)
    except SystemExit as exc:  # --help and --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (UsageError, ConfigError, StreamError) as exc:
        print(f"drofit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ShapeError, OSError) as exc:
        print(f"drofit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"drofit: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
