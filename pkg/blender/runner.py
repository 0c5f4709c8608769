"""Headless runner executed inside the modeling host.

Invocation (everything after ``--`` belongs to the runner):

    <host> --background --python runner.py -- --script <file>
        [--render <out.png>] [--manifest <out.json>]
        [--width W] [--height H] [--azimuth A] [--elevation E]
        [--margin M] [--fov F]

Flow: reset the scene to factory-empty, execute the script, compute the
scene's bounding sphere from world-space bounding-box corners, pose the
camera at the standardized view (azimuth 45, elevation 30 by default) with
the sphere-fit distance, apply the pinned light preset, render, and write the
manifest last so a partial run is detectable by its absence.

Exit codes: 0 success, 1 uncaught script exception (traceback on stderr),
3 harness/render fault. The runner is self-contained: no network, no imports
beyond the host's bundled Python, and all communication is files plus exit
codes.
"""

import argparse
import json
import math
import sys
import traceback

import bpy

EXIT_OK = 0
EXIT_SCRIPT_ERROR = 1
EXIT_HARNESS_ERROR = 3

DEFAULT_WIDTH = 800
DEFAULT_HEIGHT = 800
DEFAULT_AZIMUTH = 45.0
DEFAULT_ELEVATION = 30.0
DEFAULT_MARGIN = 1.1
DEFAULT_FOV = 60.0
EMPTY_SCENE_DISTANCE = 10.0

LIGHT_PRESET_ID = "uniform-three-point-v1"
# (name, energy, rotation euler xyz in radians): key, fill, rim.
LIGHT_PRESET = (
    ("rag3d_key", 3.0, (0.6, 0.0, 0.8)),
    ("rag3d_fill", 1.5, (0.8, 0.0, 2.4)),
    ("rag3d_rim", 2.0, (-0.7, 0.0, -2.4)),
)

GEOMETRY_TYPES = {"MESH", "CURVE", "SURFACE", "META", "FONT"}


def parse_args(argv=None):
    if argv is None:
        argv = sys.argv
        argv = argv[argv.index("--") + 1 :] if "--" in argv else []
    parser = argparse.ArgumentParser(prog="runner.py")
    parser.add_argument("--script", required=True)
    parser.add_argument("--render")
    parser.add_argument("--manifest")
    parser.add_argument("--width", type=int, default=DEFAULT_WIDTH)
    parser.add_argument("--height", type=int, default=DEFAULT_HEIGHT)
    parser.add_argument("--azimuth", type=float, default=DEFAULT_AZIMUTH)
    parser.add_argument("--elevation", type=float, default=DEFAULT_ELEVATION)
    parser.add_argument("--margin", type=float, default=DEFAULT_MARGIN)
    parser.add_argument("--fov", type=float, default=DEFAULT_FOV)
    return parser.parse_args(argv)


def camera_position(azimuth_deg, elevation_deg, distance, target):
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    return (
        target[0] + distance * math.cos(el) * math.cos(az),
        target[1] + distance * math.cos(el) * math.sin(az),
        target[2] + distance * math.sin(el),
    )


def fit_distance(bounding_radius, fov_deg, margin):
    return margin * bounding_radius / math.sin(math.radians(fov_deg) / 2.0)


def reset_scene():
    # Factory-empty scene rather than per-object deletion: no residue from
    # script-created data blocks.
    bpy.ops.wm.read_factory_settings(use_empty=True)


def run_script(path):
    with open(path, "r", encoding="utf-8") as fh:
        source = fh.read()
    namespace = {"__name__": "__main__", "__file__": path}
    exec(compile(source, path, "exec"), namespace)


def _world_corners(obj):
    matrix = obj.matrix_world
    for corner in obj.bound_box:
        x, y, z = corner[0], corner[1], corner[2]
        yield (
            matrix[0][0] * x + matrix[0][1] * y + matrix[0][2] * z + matrix[0][3],
            matrix[1][0] * x + matrix[1][1] * y + matrix[1][2] * z + matrix[1][3],
            matrix[2][0] * x + matrix[2][1] * y + matrix[2][2] * z + matrix[2][3],
        )


def scene_bounding_sphere():
    """(center, radius, empty) over all geometry objects' world bbox corners."""
    corners = [
        corner
        for obj in bpy.data.objects
        if obj.type in GEOMETRY_TYPES
        for corner in _world_corners(obj)
    ]
    if not corners:
        return (0.0, 0.0, 0.0), 0.0, True
    lo = [min(c[axis] for c in corners) for axis in range(3)]
    hi = [max(c[axis] for c in corners) for axis in range(3)]
    center = tuple((lo[axis] + hi[axis]) / 2.0 for axis in range(3))
    radius = max(math.dist(center, corner) for corner in corners)
    return center, radius, False


def pose_camera(args, center, distance):
    position = camera_position(args.azimuth, args.elevation, distance, center)

    camera_data = bpy.data.cameras.new("rag3d_camera")
    camera_data.angle = math.radians(args.fov)
    # The requested fov is the smaller axis; bind the angle to that axis.
    camera_data.sensor_fit = "VERTICAL" if args.height <= args.width else "HORIZONTAL"
    camera = bpy.data.objects.new("rag3d_camera", camera_data)
    bpy.context.scene.collection.objects.link(camera)
    camera.location = position

    from mathutils import Vector

    direction = Vector(center) - Vector(position)
    camera.rotation_euler = direction.to_track_quat("-Z", "Y").to_euler()
    bpy.context.scene.camera = camera


def apply_light_preset():
    for name, energy, rotation in LIGHT_PRESET:
        light_data = bpy.data.lights.new(name, type="SUN")
        light_data.energy = energy
        light = bpy.data.objects.new(name, light_data)
        light.rotation_euler = rotation
        bpy.context.scene.collection.objects.link(light)


def render(args):
    scene = bpy.context.scene
    try:
        scene.render.engine = "BLENDER_WORKBENCH"
    except Exception:
        pass  # keep the host's default engine
    scene.render.resolution_x = args.width
    scene.render.resolution_y = args.height
    scene.render.image_settings.file_format = "PNG"
    scene.render.filepath = args.render
    bpy.ops.render.render(write_still=True)


def write_manifest(args, center, radius, distance, empty):
    manifest = {
        "azimuth": args.azimuth,
        "elevation": args.elevation,
        "distance": distance,
        "target": list(center),
        "fov": args.fov,
        "margin": args.margin,
        "bounding_radius": radius,
        "empty_scene": empty,
        "host_version": getattr(bpy.app, "version_string", "unknown"),
        "lighting": LIGHT_PRESET_ID,
    }
    with open(args.manifest, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def main(argv=None):
    args = parse_args(argv)

    reset_scene()
    try:
        run_script(args.script)
    except Exception:
        traceback.print_exc()
        return EXIT_SCRIPT_ERROR

    try:
        center, radius, empty = scene_bounding_sphere()
        distance = EMPTY_SCENE_DISTANCE if empty else fit_distance(radius, args.fov, args.margin)
        if args.render:
            pose_camera(args, center, distance)
            apply_light_preset()
            render(args)
        if args.manifest:
            write_manifest(args, center, radius, distance, empty)
    except Exception:
        traceback.print_exc()
        return EXIT_HARNESS_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
