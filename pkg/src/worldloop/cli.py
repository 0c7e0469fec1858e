"""Command-line interface.

Subcommands: gen (dataset generation), eval (run a model over a dataset),
mirror (emit/check the symmetric probe paths), align (Sim(3) Umeyama),
rpe (relative pose error between TUM files), record (live session server),
report (re-render a JSON report as text), verify (episode integrity).
Usage errors exit 2; runtime failures exit 1. All randomness is seeded via
flags.
"""

from __future__ import annotations

import asyncio
import functools
import json
import shlex
import sys
from pathlib import Path

import click

from .actions import PRESET_NAMES, Pose, apply_sequence, preset
from .adapters import CONTEXT_POLICIES, DirectoryExchangeAdapter, StreamingAdapter, WITH_MEMORY
from .dataset import GenConfig, gen_dataset
from .episodes import gen_mirror_paths, read_episode
from .errors import WorldLoopError
from .evaluate import MetricConfig, evaluate
from .metrics import MetricReport, format_report_table
from .poses import apply_alignment, associate, read_tum, rpe as rpe_fn, umeyama_align, write_tum
from .refmodels import parse_reference_model
from .session import SessionConfig, serve_session
from .worldgen import CATEGORIES


def friendly_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except WorldLoopError as e:
            raise click.ClickException(str(e))
        except OSError as e:
            raise click.ClickException(str(e))

    return wrapper


def parse_resolution(text: str) -> tuple:
    try:
        w, h = text.lower().split("x")
        return (int(w), int(h))
    except ValueError:
        raise click.BadParameter(f"resolution must look like 256x192, got {text!r}")


@click.group()
def main():
    """Closed-loop world-model benchmark toolkit."""


@main.command()
@click.option("--out", required=True, type=click.Path(), help="Output dataset directory.")
@click.option("--seed", default=7, show_default=True, help="Generation seed.")
@click.option("--resolution", default="256x192", show_default=True)
@click.option("--memory-len", default=48, show_default=True)
@click.option("--predict-len", default=96, show_default=True)
@click.option("--test-per-cell", default=1, show_default=True,
              help="Shared-action test episodes per (category, perspective).")
@click.option("--train-per-cell", default=0, show_default=True)
@click.option("--extent", default=5000.0, show_default=True)
@click.option("--shared-preset", default="mid", type=click.Choice(PRESET_NAMES),
              show_default=True)
@click.option("--categories", default=",".join(CATEGORIES), show_default=True,
              help="Comma-separated scene categories.")
@click.option("--workers", default=0, show_default=True, help="0 = auto (up to 4).")
@friendly_errors
def gen(out, seed, resolution, memory_len, predict_len, test_per_cell, train_per_cell,
        extent, shared_preset, categories, workers):
    """Generate a benchmark dataset (episodes + manifest)."""
    config = GenConfig(
        out_dir=out, seed=seed, resolution=parse_resolution(resolution),
        memory_len=memory_len, predict_len=predict_len,
        shared_test_per_cell=test_per_cell, shared_train_per_cell=train_per_cell,
        extent=extent, shared_preset=shared_preset,
        categories=tuple(c.strip() for c in categories.split(",") if c.strip()),
        workers=workers,
    )
    manifest = gen_dataset(config)
    click.echo(f"generated {len(manifest.episodes)} episodes under {out}")


def _build_adapter(model: str, context: str, model_seed: int, timeout: float):
    if model.startswith("cmd:"):
        return DirectoryExchangeAdapter(
            command=shlex.split(model[4:]), context_policy=context,
            per_frame_timeout=timeout, label=model[4:],
        )
    return StreamingAdapter(parse_reference_model(model, seed=model_seed),
                            context_policy=context)


@main.command("eval")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True))
@click.option("--model", default="oracle", show_default=True,
              help="oracle | frozen | noisy:S | drift:E | preset-mismatch:P | cmd:SHELL")
@click.option("--context", default=WITH_MEMORY, type=click.Choice(CONTEXT_POLICIES),
              show_default=True)
@click.option("--model-seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Write the JSON report here.")
@click.option("--text", "text_out", type=click.Path(), default=None,
              help="Write the plain-text table here.")
@click.option("--delta", default=1, show_default=True, help="RPE frame interval.")
@click.option("--align", default="auto", type=click.Choice(["auto", "on", "off"]),
              show_default=True, help="Sim(3)-align trajectories before RPE.")
@click.option("--external-poses", type=click.Path(exists=True), default=None,
              help="Directory of <episode>.tum estimated trajectories.")
@click.option("--external-scores", type=click.Path(exists=True), default=None,
              help="JSON file of per-episode visual-quality scores to pass through.")
@click.option("--timeout", default=30.0, show_default=True, help="Seconds per frame.")
@friendly_errors
def eval_cmd(dataset_dir, model, context, model_seed, out, text_out, delta, align,
             external_poses, external_scores, timeout):
    """Evaluate a model over a generated dataset."""
    adapter = _build_adapter(model, context, model_seed, timeout)
    config = MetricConfig(
        rpe_delta=delta, rpe_align=align, external_poses_dir=external_poses,
        external_scores=external_scores, per_frame_timeout=timeout,
    )
    report = evaluate(dataset_dir, adapter, config)
    if out:
        Path(out).write_text(report.to_json())
        click.echo(f"wrote {out}")
    if text_out:
        Path(text_out).write_text(report.format_text())
        click.echo(f"wrote {text_out}")
    click.echo(report.format_text(), nl=False)
    if report.failures:
        click.echo(f"completed with {len(report.failures)} episode failure(s)", err=True)


@main.command()
@click.option("--out", type=click.Path(), default=None, help="Write path JSON here.")
@click.option("--check", is_flag=True, help="Simulate each path and verify closure.")
@click.option("--preset", "preset_name", default="mid", type=click.Choice(PRESET_NAMES),
              show_default=True)
@friendly_errors
def mirror(out, check, preset_name):
    """Emit (and optionally verify) the 10 symmetric probe paths."""
    paths = gen_mirror_paths()
    blob = [
        {
            "path_id": p.path_id,
            "forward": [a.text for a in p.forward_actions],
            "reverse": [a.text for a in p.reverse_actions],
        }
        for p in paths
    ]
    if out:
        Path(out).write_text(json.dumps(blob, indent=2) + "\n")
        click.echo(f"wrote {out}")
    else:
        click.echo(json.dumps(blob, indent=2))
    if check:
        cfg = preset(preset_name)
        for p in paths:
            start = Pose(0.0, 0.0, 160.0, yaw=37.0)
            end = apply_sequence(
                start, list(p.forward_actions) + list(p.reverse_actions), cfg
            )[-1]
            status = "closed" if end == start else "OPEN"
            click.echo(f"path {p.path_id:2d}: {len(p.forward_actions)} frames/leg {status}")
            if end != start:
                raise click.ClickException(f"path {p.path_id} failed closure")


@main.command()
@click.option("--est", required=True, type=click.Path(exists=True))
@click.option("--ref", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="Write the aligned est here.")
@click.option("--json", "json_out", type=click.Path(), default=None)
@click.option("--max-dt", default=None, type=float, help="Association tolerance (s).")
@friendly_errors
def align(est, ref, out, json_out, max_dt):
    """Sim(3) Umeyama alignment of an estimated trajectory onto a reference."""
    est_t = read_tum(est)
    ref_t = read_tum(ref)
    sel = associate(est_t, ref_t, max_dt=max_dt)
    xf = umeyama_align(est_t.translations[sel], ref_t.translations)
    blob = {
        "scale": xf.scale,
        "rotation_xyzw": [float(v) for v in xf.rotation],
        "translation": [float(v) for v in xf.translation],
    }
    click.echo(json.dumps(blob, indent=2))
    if json_out:
        Path(json_out).write_text(json.dumps(blob, indent=2) + "\n")
    if out:
        write_tum(apply_alignment(xf, est_t), out)
        click.echo(f"wrote {out}")


@main.command()
@click.option("--est", required=True, type=click.Path(exists=True))
@click.option("--ref", required=True, type=click.Path(exists=True))
@click.option("--delta", default=1, show_default=True, help="Frame interval.")
@click.option("--max-dt", default=None, type=float, help="Association tolerance (s).")
@click.option("--align/--no-align", "do_align", default=False, show_default=True)
@click.option("--json", "json_out", type=click.Path(), default=None)
@friendly_errors
def rpe(est, ref, delta, max_dt, do_align, json_out):
    """Relative pose error between two TUM trajectories."""
    est_t = read_tum(est)
    ref_t = read_tum(ref)
    if do_align:
        sel = associate(est_t, ref_t, max_dt=max_dt)
        xf = umeyama_align(est_t.translations[sel], ref_t.translations)
        est_t = apply_alignment(xf, est_t)
    result = rpe_fn(est_t, ref_t, delta=delta, max_dt=max_dt)
    blob = {
        "trans_rmse": result.trans_rmse,
        "rot_rmse_deg": result.rot_rmse_deg,
        "delta": result.delta,
        "pairs": result.pairs,
    }
    click.echo(json.dumps(blob, indent=2))
    if json_out:
        Path(json_out).write_text(json.dumps(blob, indent=2) + "\n")


@main.command()
@click.option("--out", required=True, type=click.Path(), help="Directory for saved episodes.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=0, show_default=True, help="0 picks a free port.")
@click.option("--world-seed", default=7, show_default=True)
@click.option("--category", default="stylized", type=click.Choice(CATEGORIES),
              show_default=True)
@click.option("--preset", "preset_name", default="mid", type=click.Choice(PRESET_NAMES),
              show_default=True)
@click.option("--perspective", default="first", type=click.Choice(["first", "third"]),
              show_default=True)
@click.option("--resolution", default="256x192", show_default=True)
@click.option("--tick-hz", default=24, show_default=True)
@click.option("--lockstep", is_flag=True,
              help="Advance only on client input (scripted recording).")
@click.option("--once", is_flag=True, help="Exit after the first saved episode.")
@friendly_errors
def record(out, host, port, world_seed, category, preset_name, perspective, resolution,
           tick_hz, lockstep, once):
    """Serve a live world for human (or scripted) episode recording."""
    config = SessionConfig(
        out_dir=out, world_seed=world_seed, category=category,
        preset_name=preset_name, perspective=perspective,
        resolution=parse_resolution(resolution), tick_hz=tick_hz, lockstep=lockstep,
    )
    Path(out).mkdir(parents=True, exist_ok=True)

    def on_ready(server):
        click.echo(f"READY ws://{host}:{server.port} out={out}", nl=True)
        sys.stdout.flush()

    try:
        asyncio.run(serve_session(config, host=host, port=port, once=once,
                                  ready_callback=on_ready))
    except KeyboardInterrupt:
        click.echo("stopped")


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="JSON report produced by eval.")
@click.option("--out", type=click.Path(), default=None)
@friendly_errors
def report(input_path, out):
    """Render a JSON evaluation report as an aligned text table."""
    blob = json.loads(Path(input_path).read_text())
    reports = [MetricReport.from_json_dict(d) for _, d in sorted(blob["reports"].items())]
    text = format_report_table(reports)
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


@main.command()
@click.argument("episode_dir", type=click.Path(exists=True))
@click.option("--frames/--no-frames", default=True, show_default=True,
              help="Also re-render every frame and compare bytes.")
@friendly_errors
def verify(episode_dir, frames):
    """Validate an episode directory: structure, checksums, replay, pixels."""
    episode = read_episode(episode_dir, verify_frames=frames)
    click.echo(
        f"OK {episode_dir}: {episode.n_frames} frames, "
        f"{episode.perspective.value} person, preset {episode.cfg.name}, "
        f"replay exact{', pixels exact' if frames else ''}"
    )


if __name__ == "__main__":
    main()
