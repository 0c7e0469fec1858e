"""Candidate-model adapter protocol.

A model run consumes a ModelRequest (context frames per the adapter's
context policy, the prediction action sequence, and the action-space
config) and must return exactly k frames at the request resolution within
the per-frame time budget. Violations raise distinct error types so the
harness can report them per episode.

Two integration modes:

* streaming: an in-process object with a ``predict(request)`` method
  (reference models plug in this way);
* directory-exchange: a subprocess command that reads an input directory
  (``memory/%06d.png``, ``actions.jsonl``, ``request.json``) and writes
  ``pred/%06d.png`` plus a ``done`` sentinel into an output directory.
  External models never see world specs or ground-truth poses.
"""

from __future__ import annotations

import json
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .actions import ActionSpaceConfig
from .episodes import Episode
from .errors import (
    AdapterProtocolError,
    AdapterTimeoutError,
    FrameCountError,
    FrameResolutionError,
)
from .render import Frame

WITH_MEMORY = "with-memory"
WITHOUT_MEMORY = "without-memory"
CONTEXT_POLICIES = (WITH_MEMORY, WITHOUT_MEMORY)
DONE_SENTINEL = "done"


@dataclass(frozen=True)
class ModelRequest:
    """One generation call: context in, k predicted frames out.

    memory_frames already reflects the context policy: the full memory
    segment for with-memory adapters, only the latest frame for
    without-memory adapters. start_index is the absolute frame index of the
    first predicted frame. episode is attached for omniscient reference
    models only; directory-exchange adapters never receive it.
    """

    memory_frames: tuple
    actions: tuple
    resolution: tuple
    cfg: ActionSpaceConfig
    perspective: str
    start_index: int
    tag: str = "predict"
    episode: Episode | None = field(default=None, repr=False, compare=False)

    @property
    def k(self) -> int:
        return len(self.actions)


def build_request(episode: Episode, context_policy: str, actions=None,
                  memory_frames=None, start_index: int | None = None,
                  tag: str = "predict") -> ModelRequest:
    """Assemble a request from an episode, enforcing the context policy."""
    if context_policy not in CONTEXT_POLICIES:
        raise AdapterProtocolError(f"unknown context policy {context_policy!r}")
    if memory_frames is None:
        memory_frames = episode.memory_frames
    if context_policy == WITHOUT_MEMORY:
        memory_frames = memory_frames[-1:]
    return ModelRequest(
        memory_frames=tuple(memory_frames),
        actions=tuple(actions if actions is not None else episode.prediction_actions),
        resolution=episode.resolution,
        cfg=episode.cfg,
        perspective=episode.perspective.value,
        start_index=episode.memory_len if start_index is None else start_index,
        tag=tag,
        episode=episode,
    )


@dataclass
class StreamingAdapter:
    """In-process adapter around anything with predict(request) -> frames."""

    model: object
    context_policy: str = WITH_MEMORY
    mode: str = "streaming"

    @property
    def label(self) -> str:
        return getattr(self.model, "label", type(self.model).__name__)

    def generate(self, request: ModelRequest) -> list:
        return list(self.model.predict(request))


@dataclass
class DirectoryExchangeAdapter:
    """Runs an external command per request via a directory handshake.

    command entries may contain {input} and {output} placeholders. The
    command must write pred/%06d.png (k frames, indices 0..k-1) and then
    create the ``done`` sentinel file.
    """

    command: list
    label: str = "external"
    context_policy: str = WITH_MEMORY
    per_frame_timeout: float = 30.0
    mode: str = "directory-exchange"

    def generate(self, request: ModelRequest) -> list:
        with tempfile.TemporaryDirectory(prefix="worldloop-adapter-") as tmp:
            in_dir = Path(tmp) / "input"
            out_dir = Path(tmp) / "output"
            (in_dir / "memory").mkdir(parents=True)
            out_dir.mkdir()
            for i, frame in enumerate(request.memory_frames):
                frame.save_png(in_dir / "memory" / f"{i:06d}.png")
            with open(in_dir / "actions.jsonl", "w") as f:
                for a in request.actions:
                    f.write(json.dumps(a.text) + "\n")
            with open(in_dir / "request.json", "w") as f:
                json.dump(
                    {
                        "k": request.k,
                        "width": request.resolution[0],
                        "height": request.resolution[1],
                        "context_policy": self.context_policy,
                        "perspective": request.perspective,
                        "start_index": request.start_index,
                        "tag": request.tag,
                        "action_space": {
                            "name": request.cfg.name,
                            "delta_p": request.cfg.delta_p,
                            "delta_r": request.cfg.delta_r,
                        },
                    },
                    f, indent=2, sort_keys=True,
                )

            argv = [
                arg.replace("{input}", str(in_dir)).replace("{output}", str(out_dir))
                for arg in self.command
            ]
            deadline = time.monotonic() + self.per_frame_timeout * max(request.k, 1) + 10.0
            proc = subprocess.Popen(argv)
            try:
                sentinel = out_dir / DONE_SENTINEL
                while not sentinel.exists():
                    code = proc.poll()
                    if code is not None:
                        time.sleep(0.1)  # racing a final flush
                        if sentinel.exists():
                            break
                        raise AdapterProtocolError(
                            f"adapter command exited with code {code} without "
                            f"writing the {DONE_SENTINEL!r} sentinel"
                        )
                    if time.monotonic() > deadline:
                        raise AdapterTimeoutError(
                            f"adapter exceeded {self.per_frame_timeout:g}s/frame "
                            f"budget for k={request.k}"
                        )
                    time.sleep(0.02)
            finally:
                if proc.poll() is None:
                    proc.kill()
                    proc.wait()

            frames = []
            for i in range(request.k):
                fp = out_dir / "pred" / f"{i:06d}.png"
                if not fp.is_file():
                    raise FrameCountError(
                        f"adapter produced {i} of {request.k} frames "
                        f"(missing {fp.name})"
                    )
                try:
                    frames.append(Frame.load_png(fp, frame_index=request.start_index + i))
                except Exception as e:
                    raise AdapterProtocolError(f"unreadable frame {fp.name}: {e}") from e
            return frames


def run_request(adapter, request: ModelRequest, per_frame_timeout: float | None = None):
    """Execute one generation call and validate the reply.

    Frame count, resolution, and (for streaming adapters, post-hoc) the time
    budget are all enforced here; each violation raises its own error type.
    """
    budget = per_frame_timeout
    if budget is None:
        budget = getattr(adapter, "per_frame_timeout", None)
    t0 = time.monotonic()
    frames = adapter.generate(request)
    elapsed = time.monotonic() - t0
    if frames is None:
        raise AdapterProtocolError("adapter returned no frame list")
    frames = list(frames)
    if len(frames) != request.k:
        raise FrameCountError(f"adapter returned {len(frames)} frames, expected {request.k}")
    w, h = request.resolution
    for i, f in enumerate(frames):
        if not isinstance(f, Frame):
            raise AdapterProtocolError(f"frame {i} is {type(f).__name__}, not Frame")
        if (f.width, f.height) != (w, h):
            raise FrameResolutionError(
                f"frame {i} is {f.width}x{f.height}, expected {w}x{h}"
            )
    if budget is not None and request.k > 0 and elapsed > budget * request.k:
        raise AdapterTimeoutError(
            f"adapter took {elapsed:.1f}s for {request.k} frames "
            f"(budget {budget:g}s/frame)"
        )
    return frames


def run_model(adapter, episode: Episode, per_frame_timeout: float | None = None):
    """Run the canonical prediction task: memory (per context policy) plus the
    prediction action sequence; returns exactly k validated frames."""
    request = build_request(episode, adapter.context_policy)
    return run_request(adapter, request, per_frame_timeout)
