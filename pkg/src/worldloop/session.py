"""Live recording sessions over websockets.

The server hosts one world and advances it at a nominal tick rate: every
tick consumes the latest held action mask from the client (a latest-value
mailbox, never a queue), steps the pose through kinematics + collision,
renders, and pushes the frame. Wire protocol per tick: one JSON text
message {"type": "state", "tick", "pose", "held"} followed by one binary
PNG frame. The client sends {"tick", "mask"} action messages and
{"type": "save"} / {"type": "discard"} commands; save persists a
frame-aligned episode directory and replies with its path.

Two clock modes:

* real-time (default): a wall-clock ticker samples the mailbox, so human
  input timing maps onto ticks; jitter never desynchronizes the log because
  actions are consumed per tick, not per wall time;
* lockstep: the world advances only after the client's mask for the current
  tick arrives, which makes scripted recordings exactly reproducible.

Perspective and step-size preset are fixed for the whole session; a
set_perspective request is rejected. An unsaved session leaves nothing on
disk.
"""

from __future__ import annotations

import asyncio
import json
import random
from dataclasses import dataclass
from pathlib import Path

from websockets.asyncio.server import serve
from websockets.exceptions import ConnectionClosed

from .actions import ActionVector, Pose, preset, step_pose
from .episodes import DEFAULT_MEMORY_LEN, Episode, write_episode
from .errors import SessionError
from .render import Frame, Perspective, render, third_person_camera
from .worldgen import WorldSpec, build_world, resolve_collision

_PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class SessionConfig:
    out_dir: str
    world_seed: int = 7
    category: str = "stylized"
    extent: float = 12000.0
    preset_name: str = "mid"
    perspective: str = "first"
    resolution: tuple = (256, 192)
    tick_hz: int = 24
    lockstep: bool = False
    memory_len: int = DEFAULT_MEMORY_LEN
    idle_timeout: float = 120.0


class _Session:
    """State of one live recording: poses, actions, and encoded frames."""

    def __init__(self, config: SessionConfig, session_id: int):
        self.config = config
        self.session_id = session_id
        self.world = build_world(
            WorldSpec(seed=config.world_seed, category=config.category,
                      extent=config.extent)
        )
        self.cfg = preset(config.preset_name)
        self.perspective = Perspective(config.perspective)
        rng = random.Random(config.world_seed * 100003 + session_id)
        self.start = Pose(0.0, 0.0, self.world.eye_level(0.0, 0.0),
                          yaw=rng.uniform(0.0, 360.0))
        self.agent = self.start
        self.actions: list = []
        self.agent_poses: list = [self.start]
        self.camera_poses: list = []
        self.pngs: list = []
        self.saved_path: Path | None = None
        self._render_current()

    def _render_current(self) -> None:
        idx = len(self.pngs)
        if self.perspective is Perspective.THIRD:
            cam = third_person_camera(self.agent, self.world)
            frame = render(self.world, cam, self.config.resolution, idx, _avatar=self.agent)
        else:
            cam = self.agent
            frame = render(self.world, cam, self.config.resolution, idx)
        self.camera_poses.append(cam)
        self.pngs.append(frame.to_png_bytes())

    @property
    def tick(self) -> int:
        return len(self.actions)

    def advance(self, mask: int) -> None:
        action = ActionVector.from_mask(mask)
        nxt = step_pose(self.agent, action, self.cfg)
        pos = resolve_collision(self.world, self.agent.position, nxt.position)
        self.agent = nxt if pos == nxt.position else Pose(
            pos[0], pos[1], pos[2], nxt.yaw, nxt.pitch
        )
        self.actions.append(action)
        self.agent_poses.append(self.agent)
        self._render_current()

    def save(self) -> Path:
        n_frames = len(self.pngs)
        if n_frames < 2:
            raise SessionError("need at least 2 recorded frames to save")
        memory_len = min(self.config.memory_len, max(1, n_frames // 3))
        predict_len = n_frames - memory_len
        frames = tuple(
            Frame.load_png_bytes(png, i) for i, png in enumerate(self.pngs)
        )
        episode = Episode(
            world_spec=self.world.spec,
            cfg=self.cfg,
            perspective=self.perspective,
            actions=tuple(self.actions),
            camera_poses=tuple(self.camera_poses),
            character_poses=tuple(self.agent_poses)
            if self.perspective is Perspective.THIRD else None,
            frames=frames,
            memory_len=memory_len,
            predict_len=predict_len,
            fps=self.config.tick_hz,
            resolution=tuple(self.config.resolution),
        )
        target = Path(self.config.out_dir) / f"session_{self.session_id:04d}"
        write_episode(episode, target)
        self.saved_path = target
        return target

    def state_message(self) -> str:
        p = self.agent
        held = self.actions[-1].text if self.actions else "-"
        return json.dumps({
            "type": "state",
            "tick": self.tick,
            "frame_index": self.tick,
            "pose": {"x": p.x, "y": p.y, "z": p.z, "yaw": p.yaw, "pitch": p.pitch},
            "held": held,
        })


class SessionServer:
    """Websocket endpoint hosting one live session at a time."""

    def __init__(self, config: SessionConfig, host: str = "127.0.0.1", port: int = 0,
                 once: bool = False):
        self.config = config
        self.host = host
        self.port = port
        self.once = once
        self.saved: list = []
        self._busy = False
        self._counter = 0
        self._server = None
        self._done = asyncio.Event()

    async def __aenter__(self):
        try:
            self._server = await serve(self._handle, self.host, self.port)
        except OSError as e:
            raise SessionError(f"cannot bind {self.host}:{self.port}: {e}") from e
        self.port = self._server.sockets[0].getsockname()[1]
        return self

    async def __aexit__(self, *exc):
        self._server.close()
        await self._server.wait_closed()

    async def serve_until_done(self):
        await self._done.wait()

    async def _handle(self, ws):
        if self._busy:
            await ws.send(json.dumps({
                "type": "error",
                "message": "another recording session is active",
            }))
            await ws.close()
            return
        self._busy = True
        self._counter += 1
        try:
            session = _Session(self.config, self._counter)
            await ws.send(json.dumps({
                "type": "hello",
                "protocol": _PROTOCOL_VERSION,
                "session_id": session.session_id,
                "width": self.config.resolution[0],
                "height": self.config.resolution[1],
                "preset": self.config.preset_name,
                "perspective": self.config.perspective,
                "tick_hz": self.config.tick_hz,
                "lockstep": self.config.lockstep,
            }))
            await ws.send(session.state_message())
            await ws.send(session.pngs[-1])
            if self.config.lockstep:
                await self._run_lockstep(ws, session)
            else:
                await self._run_realtime(ws, session)
            if session.saved_path is not None:
                self.saved.append(session.saved_path)
                if self.once:
                    self._done.set()
        except ConnectionClosed:
            pass  # unsaved session is discarded
        finally:
            self._busy = False

    async def _handle_command(self, ws, session, msg: dict) -> bool:
        """Commands common to both clock modes; True means end the session."""
        mtype = msg.get("type")
        if mtype == "save":
            try:
                path = session.save()
            except (SessionError, OSError) as e:
                await ws.send(json.dumps({"type": "error", "message": str(e)}))
                return False
            await ws.send(json.dumps({"type": "saved", "path": str(path)}))
            return True
        if mtype == "discard":
            await ws.send(json.dumps({"type": "discarded"}))
            return True
        if mtype == "set_perspective":
            await ws.send(json.dumps({
                "type": "error",
                "message": "perspective is fixed for the whole episode",
            }))
            return False
        await ws.send(json.dumps({"type": "error", "message": f"unknown message {mtype!r}"}))
        return False

    async def _run_lockstep(self, ws, session):
        while True:
            raw = await asyncio.wait_for(ws.recv(), self.config.idle_timeout)
            msg = self._parse(raw)
            if msg is None:
                await ws.send(json.dumps({"type": "error", "message": "malformed message"}))
                continue
            if "mask" in msg and "type" not in msg:
                session.advance(int(msg["mask"]))
                await ws.send(session.state_message())
                await ws.send(session.pngs[-1])
                continue
            if await self._handle_command(ws, session, msg):
                return

    async def _run_realtime(self, ws, session):
        mailbox = {"mask": 0}
        commands: asyncio.Queue = asyncio.Queue()

        async def reader():
            try:
                async for raw in ws:
                    msg = self._parse(raw)
                    if msg is None:
                        continue
                    if "mask" in msg and "type" not in msg:
                        mailbox["mask"] = int(msg["mask"])  # latest value wins
                    else:
                        await commands.put(msg)
            except ConnectionClosed:
                await commands.put({"type": "_closed"})

        reader_task = asyncio.create_task(reader())
        period = 1.0 / self.config.tick_hz
        try:
            loop = asyncio.get_running_loop()
            next_tick = loop.time() + period
            while True:
                timeout = max(0.0, next_tick - loop.time())
                try:
                    msg = await asyncio.wait_for(commands.get(), timeout)
                    if msg.get("type") == "_closed":
                        raise ConnectionClosed(None, None)
                    if await self._handle_command(ws, session, msg):
                        return
                    continue
                except asyncio.TimeoutError:
                    pass
                next_tick += period
                session.advance(mailbox["mask"])
                await ws.send(session.state_message())
                await ws.send(session.pngs[-1])
        finally:
            reader_task.cancel()

    @staticmethod
    def _parse(raw):
        if isinstance(raw, bytes):
            return None
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError:
            return None
        return msg if isinstance(msg, dict) else None


async def serve_session(config: SessionConfig, host: str = "127.0.0.1", port: int = 0,
                        once: bool = False, ready_callback=None):
    """Run the session endpoint; blocks until stopped (or first save if once)."""
    async with SessionServer(config, host, port, once=once) as server:
        if ready_callback is not None:
            ready_callback(server)
        if once:
            await server.serve_until_done()
        else:
            await asyncio.Future()  # run forever
        return server
