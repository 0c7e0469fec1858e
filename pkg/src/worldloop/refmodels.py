"""Deterministic reference models used to validate the metric pipeline.

Each model is a perfect or deliberately flawed candidate with a known
analytic signature: the oracle scores exactly zero everywhere, the noisy
model's memory loss equals its pixel-noise variance, the drift model shows
up in RPE, and the preset-mismatch model separates the generalization
suite. All are pure functions of (parameters, episode, seed).

Reference models are omniscient: they read the episode's world spec and
ground-truth poses. Candidate models integrated through the directory
protocol never see those.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .actions import ActionSpaceConfig, Pose, preset
from .episodes import Episode, simulate_poses
from .errors import AdapterError
from .render import Frame, Perspective, render, third_person_camera
from .worldgen import World, WorldSpec, build_world

_WORLD_CACHE: dict = {}


def cached_world(spec: WorldSpec) -> World:
    w = _WORLD_CACHE.get(spec)
    if w is None:
        w = _WORLD_CACHE[spec] = build_world(spec)
    return w


def _agent_pose(episode: Episode, index: int) -> Pose:
    if episode.perspective is Perspective.THIRD:
        return episode.character_poses[index]
    return episode.camera_poses[index]


def _render_agent_window(world: World, episode: Episode, agent_poses, start_index: int):
    frames = []
    for i, agent in enumerate(agent_poses):
        idx = start_index + i
        if episode.perspective is Perspective.THIRD:
            cam = third_person_camera(agent, world)
            frames.append(render(world, cam, episode.resolution, idx, _avatar=agent))
        else:
            frames.append(render(world, agent, episode.resolution, idx))
    return frames


def _window_cameras(world: World, episode: Episode, agent_poses):
    if episode.perspective is Perspective.THIRD:
        return [third_person_camera(p, world) for p in agent_poses]
    return list(agent_poses)


class ReferenceModel:
    label = "reference"

    def predict(self, request) -> list:
        raise NotImplementedError

    def predicted_camera_poses(self, episode: Episode) -> list:
        """The model's believed camera trajectory over the prediction window."""
        return list(episode.prediction_poses)

    def _simulate_window(self, episode: Episode, request, cfg: ActionSpaceConfig | None = None):
        world = cached_world(episode.world_spec)
        base = _agent_pose(episode, request.start_index - 1)
        agents = simulate_poses(world, base, request.actions, cfg or episode.cfg)[1:]
        return world, agents


class OracleModel(ReferenceModel):
    """The simulator itself as a candidate; every metric is exactly zero."""

    label = "oracle"

    def predict(self, request) -> list:
        episode = request.episode
        world, agents = self._simulate_window(episode, request)
        return _render_agent_window(world, episode, agents, request.start_index)


class FrozenModel(ReferenceModel):
    """Repeats the last context frame; no dynamics at all."""

    label = "frozen"

    def predict(self, request) -> list:
        last = request.memory_frames[-1]
        return [
            replace(last, frame_index=request.start_index + i) for i in range(request.k)
        ]

    def predicted_camera_poses(self, episode: Episode) -> list:
        start = episode.camera_poses[episode.memory_len - 1]
        return [start] * episode.predict_len


@dataclass
class NoisyModel(ReferenceModel):
    """Oracle pixels plus i.i.d. quantized Gaussian noise of std sigma.

    Out-of-range samples are reflected (x - n), which preserves the noise
    magnitude, so E[mse] tracks sigma^2 up to 8-bit quantization.
    """

    sigma: float
    seed: int = 0

    @property
    def label(self) -> str:
        return f"noisy({self.sigma:g})"

    def predict(self, request) -> list:
        episode = request.episode
        world, agents = self._simulate_window(episode, request)
        clean = _render_agent_window(world, episode, agents, request.start_index)
        out = []
        for frame in clean:
            rng = np.random.default_rng(
                np.random.SeedSequence(
                    [self.seed, episode.world_spec.seed, frame.frame_index]
                )
            )
            x = frame.to_array().astype(np.float64) / 255.0
            n = rng.normal(0.0, self.sigma, size=x.shape)
            y = x + n
            y = np.where(y > 1.0, x - n, y)
            y = np.where(y < 0.0, x - n, y)
            y = np.clip(y, 0.0, 1.0)
            out.append(Frame.from_array(np.round(y * 255.0), frame.frame_index))
        return out


@dataclass
class DriftModel(ReferenceModel):
    """Oracle that slides the agent an extra eps along +x every frame."""

    eps: float

    @property
    def label(self) -> str:
        return f"drift({self.eps:g})"

    def _drifted(self, episode: Episode, request):
        world, agents = self._simulate_window(episode, request)
        drifted = [
            Pose(p.x + self.eps * (i + 1), p.y, p.z, p.yaw, p.pitch)
            for i, p in enumerate(agents)
        ]
        return world, drifted

    def predict(self, request) -> list:
        episode = request.episode
        world, drifted = self._drifted(episode, request)
        return _render_agent_window(world, episode, drifted, request.start_index)

    def predicted_camera_poses(self, episode: Episode) -> list:
        from .adapters import build_request  # local import to avoid a cycle

        request = build_request(episode, "with-memory")
        world, drifted = self._drifted(episode, request)
        return _window_cameras(world, episode, drifted)


@dataclass
class PresetMismatchModel(ReferenceModel):
    """Executes the action log under an assumed step-size preset.

    Exact on episodes recorded with the assumed preset; increasingly wrong
    as the true preset departs from it.
    """

    assumed: str

    @property
    def label(self) -> str:
        return f"preset-mismatch({self.assumed})"

    def predict(self, request) -> list:
        episode = request.episode
        world, agents = self._simulate_window(episode, request, cfg=preset(self.assumed))
        return _render_agent_window(world, episode, agents, request.start_index)

    def predicted_camera_poses(self, episode: Episode) -> list:
        from .adapters import build_request

        request = build_request(episode, "with-memory")
        world, agents = self._simulate_window(episode, request, cfg=preset(self.assumed))
        return _window_cameras(world, episode, agents)


def parse_reference_model(text: str, seed: int = 0) -> ReferenceModel:
    """Parse CLI model specs: oracle | frozen | noisy:SIGMA | drift:EPS |
    preset-mismatch:NAME."""
    name, _, arg = text.partition(":")
    if name == "oracle":
        return OracleModel()
    if name == "frozen":
        return FrozenModel()
    if name == "noisy":
        return NoisyModel(sigma=float(arg or 0.05), seed=seed)
    if name == "drift":
        return DriftModel(eps=float(arg or 0.01))
    if name == "preset-mismatch":
        return PresetMismatchModel(assumed=arg or "mid")
    raise AdapterError(
        f"unknown reference model {text!r}; expected oracle, frozen, noisy:SIGMA, "
        f"drift:EPS, or preset-mismatch:PRESET"
    )
