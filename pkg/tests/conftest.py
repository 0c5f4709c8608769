import stat
import textwrap
from pathlib import Path

import pytest

from rag3d.corpus import load_corpus
from rag3d.embedding import EmbedderConfig
from rag3d.sample_corpus import write_sample_corpus
from rag3d.service import build_index

# Stub modeling host: a standalone executable that mimics the host CLI
# (`<host> --background --python <runner> -- --script ... [--render ...]`),
# executes the script, and writes render + manifest artifacts. Scripts may set
# a BOUNDING_RADIUS global to simulate scene extent. Pose math is computed
# inline so manifests stay independent of the package under test.
STUB_HOST_SOURCE = textwrap.dedent(
    '''
    #!/usr/bin/env python3
    import argparse
    import json
    import math
    import struct
    import sys
    import traceback
    import zlib


    def parse_args():
        argv = sys.argv[1:]
        if "--" in argv:
            runner_args = argv[argv.index("--") + 1 :]
        else:
            runner_args = []
        parser = argparse.ArgumentParser()
        parser.add_argument("--script", required=True)
        parser.add_argument("--render")
        parser.add_argument("--manifest")
        parser.add_argument("--width", type=int, default=800)
        parser.add_argument("--height", type=int, default=800)
        parser.add_argument("--azimuth", type=float, default=45.0)
        parser.add_argument("--elevation", type=float, default=30.0)
        parser.add_argument("--margin", type=float, default=1.1)
        parser.add_argument("--fov", type=float, default=60.0)
        return parser.parse_args(runner_args)


    def write_png(path, width, height):
        def chunk(tag, payload):
            return (
                struct.pack(">I", len(payload))
                + tag
                + payload
                + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
            )

        row = b"\\x00" + b"\\x7f\\x7f\\x7f" * width
        ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
        data = (
            b"\\x89PNG\\r\\n\\x1a\\n"
            + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", zlib.compress(row * height))
            + chunk(b"IEND", b"")
        )
        with open(path, "wb") as fh:
            fh.write(data)


    class _Anything:
        """Auto-vivifying stand-in for the host scripting API (bpy)."""

        def __getattr__(self, name):
            value = _Anything()
            object.__setattr__(self, name, value)
            return value

        def __setattr__(self, name, value):
            object.__setattr__(self, name, value)

        def __call__(self, *args, **kwargs):
            return _Anything()


    def install_fake_bpy():
        import types

        module = types.ModuleType("bpy")
        module.ops = _Anything()
        module.context = _Anything()
        module.data = _Anything()
        module.app = _Anything()
        sys.modules["bpy"] = module


    def main():
        args = parse_args()
        with open(args.script, "r", encoding="utf-8") as fh:
            source = fh.read()
        install_fake_bpy()
        namespace = {"__name__": "__main__"}
        try:
            exec(compile(source, args.script, "exec"), namespace)
        except Exception:
            traceback.print_exc()
            sys.exit(1)

        if args.render:
            radius = namespace.get("BOUNDING_RADIUS")
            empty_scene = radius is None
            fallback_distance = 10.0
            if empty_scene:
                distance = fallback_distance
                radius_out = 0.0
            else:
                distance = args.margin * float(radius) / math.sin(math.radians(args.fov) / 2.0)
                radius_out = float(radius)
            if not namespace.get("SKIP_RENDER"):
                write_png(args.render, args.width, args.height)
            if args.manifest:
                manifest = {
                    "azimuth": args.azimuth,
                    "elevation": args.elevation,
                    "distance": distance,
                    "target": [0.0, 0.0, 0.0],
                    "fov": args.fov,
                    "margin": args.margin,
                    "bounding_radius": radius_out,
                    "empty_scene": empty_scene,
                    "host_version": "stub-host 1.0",
                }
                with open(args.manifest, "w", encoding="utf-8") as fh:
                    json.dump(manifest, fh)
        sys.exit(0)


    main()
    '''
).strip()


@pytest.fixture(scope="session")
def sample_corpus_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("sample_corpus")
    write_sample_corpus(root)
    return root


@pytest.fixture(scope="session")
def sample_corpus(sample_corpus_dir):
    return load_corpus(sample_corpus_dir)


@pytest.fixture(scope="session")
def embedder() -> EmbedderConfig:
    return EmbedderConfig()


@pytest.fixture(scope="session")
def sample_index(sample_corpus, embedder):
    return build_index(sample_corpus, embedder)


@pytest.fixture(scope="session")
def stub_host(tmp_path_factory) -> Path:
    """Executable stub host honoring the runner invocation contract."""
    host_dir = tmp_path_factory.mktemp("stub_host")
    host = host_dir / "stub_host.py"
    host.write_text(STUB_HOST_SOURCE + "\n", encoding="utf-8")
    host.chmod(host.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    return host


@pytest.fixture(scope="session")
def stub_runner(tmp_path_factory) -> Path:
    """Placeholder runner path; the stub host ignores its content."""
    runner = tmp_path_factory.mktemp("stub_runner") / "runner.py"
    runner.write_text("# placeholder runner; the stub host implements the contract itself\n", encoding="utf-8")
    return runner
