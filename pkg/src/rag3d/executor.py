"""Headless script execution and standardized camera math.

Scripts run inside a modeling-host subprocess (the host launches a runner
script per the invocation contract below). Every subprocess outcome maps to
exactly one failure kind; launcher faults (binary missing, spawn failure,
in-host harness faults) are kept distinct from script failures so evaluation
can exclude infrastructure noise from compilation metrics.

Invocation contract:
  <host_binary> --background --python <runner_path> -- --script <file>
      [--render <out.png> --manifest <out.json>]
      [--width W --height H --azimuth A --elevation E --margin M --fov F]

Runner exit codes: 0 success, 1 script error, 3 in-host harness/render fault.
"""

from __future__ import annotations

import json
import math
import os
import signal
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import DomainError

DEFAULT_TIMEOUT = 120.0
DEFAULT_WIDTH = 800
DEFAULT_HEIGHT = 800
DEFAULT_AZIMUTH = 45.0
DEFAULT_ELEVATION = 30.0
DEFAULT_MARGIN = 1.1
DEFAULT_FOV = 60.0
EXCERPT_LIMIT = 2000

FAILURE_NONE = "none"
FAILURE_SCRIPT = "script_error"
FAILURE_TIMEOUT = "timeout"
FAILURE_LAUNCHER = "launcher_error"

EXIT_SCRIPT_ERROR = 1
EXIT_HARNESS_ERROR = 3


class ExecutorError(DomainError):
    pass


class NonpositiveDistance(ExecutorError):
    pass


class NonpositiveRadius(ExecutorError):
    pass


class InvalidFov(ExecutorError):
    pass


class RenderFailed(ExecutorError):
    pass


class MissingOutput(ExecutorError):
    pass


@dataclass(frozen=True)
class ExecutionResult:
    success: bool
    exit_code: int
    duration: float
    stdout_excerpt: str
    stderr_excerpt: str
    failure_kind: str  # FAILURE_* constant


@dataclass(frozen=True)
class CameraSpec:
    azimuth: float = DEFAULT_AZIMUTH
    elevation: float = DEFAULT_ELEVATION
    distance: float | None = None  # None: host fits from the scene bounds
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)
    fov: float = DEFAULT_FOV  # smaller of horizontal/vertical, degrees
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        if not 0.0 < self.fov < 180.0:
            raise InvalidFov(f"fov must be in (0, 180), got {self.fov}")
        if self.margin < 1.0:
            raise ExecutorError(f"margin must be >= 1, got {self.margin}")
        if self.distance is not None and self.distance <= 0.0:
            raise NonpositiveDistance(f"distance must be positive, got {self.distance}")


@dataclass(frozen=True)
class RenderSpec:
    output_path: Path
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    camera: CameraSpec = CameraSpec()
    lighting: str = "uniform-three-point-v1"

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ExecutorError(f"render dimensions must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class ExecutorEnv:
    host_binary: str
    runner_path: str
    timeout: float = DEFAULT_TIMEOUT
    workdir: Path | None = None


@dataclass(frozen=True)
class HostRun:
    """Outcome of one host invocation: classification plus render artifacts."""

    execution: ExecutionResult
    render_path: Path | None
    manifest: dict | None


def compute_camera_position(
    azimuth_deg: float,
    elevation_deg: float,
    distance: float,
    target: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> tuple[float, float, float]:
    """Spherical camera position aimed at target.

    target + r * (cos el * cos az, cos el * sin az, sin el)
    """
    if distance <= 0.0:
        raise NonpositiveDistance(f"distance must be positive, got {distance}")
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    return (
        target[0] + distance * math.cos(el) * math.cos(az),
        target[1] + distance * math.cos(el) * math.sin(az),
        target[2] + distance * math.sin(el),
    )


def fit_distance(bounding_radius: float, fov_deg: float, margin: float = DEFAULT_MARGIN) -> float:
    """Camera distance fitting a sphere of the given radius in the frustum.

    d = margin * R / sin(fov / 2); a sphere of radius R at the target then
    subtends at most fov/margin along the frustum's narrow axis.
    """
    if bounding_radius <= 0.0:
        raise NonpositiveRadius(f"bounding radius must be positive, got {bounding_radius}")
    if not 0.0 < fov_deg < 180.0:
        raise InvalidFov(f"fov must be in (0, 180), got {fov_deg}")
    if margin < 1.0:
        raise ExecutorError(f"margin must be >= 1, got {margin}")
    return margin * bounding_radius / math.sin(math.radians(fov_deg) / 2.0)


def _excerpt(stream: bytes) -> str:
    text = stream.decode("utf-8", errors="replace")
    return text[-EXCERPT_LIMIT:] if len(text) > EXCERPT_LIMIT else text


def _classify(exit_code: int, timed_out: bool) -> tuple[bool, str]:
    if timed_out:
        return False, FAILURE_TIMEOUT
    if exit_code == 0:
        return True, FAILURE_NONE
    if exit_code == EXIT_HARNESS_ERROR:
        return False, FAILURE_LAUNCHER
    return False, FAILURE_SCRIPT


def run_in_host(script: str, env: ExecutorEnv, render: RenderSpec | None = None) -> HostRun:
    """Execute a script in the host, optionally rendering, and classify."""
    if not script or not script.strip():
        raise ExecutorError("script is empty")

    workdir = Path(env.workdir).resolve() if env.workdir else Path(tempfile.mkdtemp(prefix="rag3d-run-"))
    workdir.mkdir(parents=True, exist_ok=True)
    script_path = workdir / "script.py"
    script_path.write_text(script, encoding="utf-8")

    # The subprocess runs with cwd=workdir; every caller-relative path must
    # be absolutized now. Bare names (e.g. "blender") still resolve via PATH.
    host_binary = str(Path(env.host_binary).resolve()) if Path(env.host_binary).exists() else env.host_binary
    runner_path = str(Path(env.runner_path).resolve()) if Path(env.runner_path).exists() else env.runner_path
    cmd = [host_binary, "--background", "--python", runner_path, "--", "--script", str(script_path)]
    output_path: Path | None = None
    manifest_path: Path | None = None
    if render is not None:
        output_path = render.output_path.resolve()
        try:
            output_path.parent.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            result = ExecutionResult(
                success=False,
                exit_code=-1,
                duration=0.0,
                stdout_excerpt="",
                stderr_excerpt=f"cannot create render directory: {exc}"[:EXCERPT_LIMIT],
                failure_kind=FAILURE_LAUNCHER,
            )
            return HostRun(execution=result, render_path=None, manifest=None)
        manifest_path = output_path.with_suffix(".json")
        cam = render.camera
        cmd += ["--render", str(output_path), "--manifest", str(manifest_path)]
        cmd += ["--width", str(render.width), "--height", str(render.height)]
        cmd += ["--azimuth", repr(cam.azimuth), "--elevation", repr(cam.elevation)]
        cmd += ["--margin", repr(cam.margin), "--fov", repr(cam.fov)]

    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            cmd,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            cwd=str(workdir),
            start_new_session=True,
        )
    except OSError as exc:
        duration = time.monotonic() - start
        result = ExecutionResult(
            success=False,
            exit_code=-1,
            duration=duration,
            stdout_excerpt="",
            stderr_excerpt=str(exc)[:EXCERPT_LIMIT],
            failure_kind=FAILURE_LAUNCHER,
        )
        return HostRun(execution=result, render_path=None, manifest=None)

    timed_out = False
    try:
        stdout, stderr = proc.communicate(timeout=env.timeout)
        exit_code = proc.returncode
    except subprocess.TimeoutExpired:
        timed_out = True
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            proc.kill()
        stdout, stderr = proc.communicate()
        exit_code = proc.returncode
    duration = time.monotonic() - start

    success, failure_kind = _classify(exit_code, timed_out)
    result = ExecutionResult(
        success=success,
        exit_code=exit_code,
        duration=duration,
        stdout_excerpt=_excerpt(stdout),
        stderr_excerpt=_excerpt(stderr),
        failure_kind=failure_kind,
    )

    render_path: Path | None = None
    manifest: dict | None = None
    if output_path is not None and success:
        if output_path.is_file():
            render_path = output_path
        if manifest_path is not None and manifest_path.is_file():
            try:
                manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
            except ValueError:
                manifest = None
    return HostRun(execution=result, render_path=render_path, manifest=manifest)


def execute_script(script: str, env: ExecutorEnv) -> ExecutionResult:
    """Run a script without rendering and classify the outcome."""
    return run_in_host(script, env, render=None).execution


def render_object(script: str, env: ExecutorEnv, spec: RenderSpec) -> Path:
    """Execute a script and render the resulting scene in one invocation.

    Headless host state does not persist between invocations, so the script
    is part of the call.
    """
    run = run_in_host(script, env, render=spec)
    if run.execution.failure_kind == FAILURE_TIMEOUT:
        raise RenderFailed(f"host timed out after {env.timeout}s")
    if not run.execution.success:
        raise RenderFailed(f"host exited {run.execution.exit_code}: {run.execution.stderr_excerpt[-300:]}")
    if run.render_path is None:
        raise MissingOutput(f"host exited 0 but render output {spec.output_path} is absent")
    return run.render_path
