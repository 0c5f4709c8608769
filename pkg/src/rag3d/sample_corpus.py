"""Bundled 10-entry sample corpus used by tests, demos, and `corpus init-sample`.

Five indoor and five outdoor categories, one variation each. Scripts are
small but real modeling code; images are tiny solid-color placeholders. The
writer is deterministic: the same tree is produced byte-for-byte on every
call, so load/write round-trips are stable.
"""

from __future__ import annotations

import json
from pathlib import Path

from .corpus import MANIFEST_NAME
from .imaging import write_solid_png

_SCRIPT_HEADER = "import bpy\n\n"

SAMPLE_ENTRIES = [
    {
        "id": "chair-001",
        "category": "Chair",
        "setting": "indoor",
        "variation": 1,
        "description": (
            "A simple wooden dining chair with four straight legs, a flat square seat, "
            "and a vertical slatted backrest in a warm oak finish."
        ),
        "color": (139, 90, 43),
        "code": _SCRIPT_HEADER
        + (
            "def make_leg(x, y):\n"
            "    bpy.ops.mesh.primitive_cube_add(size=1.0, location=(x, y, 0.25))\n"
            "    leg = bpy.context.active_object\n"
            "    leg.scale = (0.05, 0.05, 0.25)\n"
            "    return leg\n"
            "\n"
            "for x in (-0.2, 0.2):\n"
            "    for y in (-0.2, 0.2):\n"
            "        make_leg(x, y)\n"
            "\n"
            "bpy.ops.mesh.primitive_cube_add(size=1.0, location=(0.0, 0.0, 0.52))\n"
            "seat = bpy.context.active_object\n"
            "seat.scale = (0.25, 0.25, 0.02)\n"
            "\n"
            "bpy.ops.mesh.primitive_cube_add(size=1.0, location=(0.0, -0.23, 0.85))\n"
            "back = bpy.context.active_object\n"
            "back.scale = (0.25, 0.02, 0.3)\n"
        ),
    },
    {
        "id": "table-001",
        "category": "Table",
        "setting": "indoor",
        "variation": 1,
        "description": (
            "A rectangular dining table with a thick rounded-edge top and four "
            "cylindrical legs, finished in dark walnut."
        ),
        "color": (92, 64, 51),
        "code": _SCRIPT_HEADER
        + (
            "bpy.ops.mesh.primitive_cube_add(size=1.0, location=(0.0, 0.0, 0.72))\n"
            "top = bpy.context.active_object\n"
            "top.scale = (0.8, 0.45, 0.03)\n"
            "\n"
            "for x in (-0.7, 0.7):\n"
            "    for y in (-0.35, 0.35):\n"
            "        bpy.ops.mesh.primitive_cylinder_add(radius=0.04, depth=0.7, location=(x, y, 0.35))\n"
        ),
    },
    {
        "id": "lamp-001",
        "category": "Lamp",
        "setting": "indoor",
        "variation": 1,
        "description": (
            "A slender floor lamp with a round weighted base, a tall thin metal stem, "
            "and a conical fabric shade that glows softly."
        ),
        "color": (222, 196, 132),
        "code": _SCRIPT_HEADER
        + (
            "bpy.ops.mesh.primitive_cylinder_add(radius=0.18, depth=0.04, location=(0.0, 0.0, 0.02))\n"
            "bpy.ops.mesh.primitive_cylinder_add(radius=0.02, depth=1.5, location=(0.0, 0.0, 0.79))\n"
            "bpy.ops.mesh.primitive_cone_add(radius1=0.22, radius2=0.12, depth=0.3, location=(0.0, 0.0, 1.6))\n"
            "\n"
            "light_data = bpy.data.lights.new(name='lamp_bulb', type='POINT')\n"
            "light_data.energy = 40.0\n"
            "bulb = bpy.data.objects.new('lamp_bulb', light_data)\n"
            "bulb.location = (0.0, 0.0, 1.55)\n"
            "bpy.context.collection.objects.link(bulb)\n"
        ),
    },
    {
        "id": "plate-001",
        "category": "Plate",
        "setting": "indoor",
        "variation": 1,
        "description": (
            "A shallow ceramic dinner plate with a wide flat center, a gently raised "
            "rim, and a glossy white glaze."
        ),
        "color": (240, 240, 235),
        "code": _SCRIPT_HEADER
        + (
            "bpy.ops.mesh.primitive_cylinder_add(radius=0.14, depth=0.01, location=(0.0, 0.0, 0.005))\n"
            "center = bpy.context.active_object\n"
            "center.name = 'plate_center'\n"
            "\n"
            "bpy.ops.mesh.primitive_torus_add(major_radius=0.14, minor_radius=0.012, location=(0.0, 0.0, 0.012))\n"
            "rim = bpy.context.active_object\n"
            "rim.name = 'plate_rim'\n"
        ),
    },
    {
        "id": "bookshelf-001",
        "category": "Bookshelf",
        "setting": "indoor",
        "variation": 1,
        "description": (
            "A tall five-shelf bookcase with two solid side panels, evenly spaced "
            "horizontal shelves, and a closed back panel in pale birch."
        ),
        "color": (205, 183, 158),
        "code": _SCRIPT_HEADER
        + (
            "for side in (-0.4, 0.4):\n"
            "    bpy.ops.mesh.primitive_cube_add(size=1.0, location=(side, 0.0, 1.0))\n"
            "    panel = bpy.context.active_object\n"
            "    panel.scale = (0.02, 0.15, 1.0)\n"
            "\n"
            "for level in range(5):\n"
            "    z = 0.1 + level * 0.45\n"
            "    bpy.ops.mesh.primitive_cube_add(size=1.0, location=(0.0, 0.0, z))\n"
            "    shelf = bpy.context.active_object\n"
            "    shelf.scale = (0.4, 0.15, 0.015)\n"
            "\n"
            "bpy.ops.mesh.primitive_cube_add(size=1.0, location=(0.0, 0.15, 1.0))\n"
            "back = bpy.context.active_object\n"
            "back.scale = (0.4, 0.01, 1.0)\n"
        ),
    },
    {
        "id": "tree-001",
        "category": "Tree",
        "setting": "outdoor",
        "variation": 1,
        "description": (
            "A mature deciduous tree with a thick tapering brown trunk and a broad "
            "rounded crown of dense green foliage."
        ),
        "color": (34, 139, 34),
        "code": _SCRIPT_HEADER
        + (
            "bpy.ops.mesh.primitive_cone_add(radius1=0.25, radius2=0.12, depth=2.0, location=(0.0, 0.0, 1.0))\n"
            "trunk = bpy.context.active_object\n"
            "trunk.name = 'trunk'\n"
            "\n"
            "bpy.ops.mesh.primitive_uv_sphere_add(radius=1.1, location=(0.0, 0.0, 2.6))\n"
            "crown = bpy.context.active_object\n"
            "crown.name = 'crown'\n"
            "crown.scale = (1.0, 1.0, 0.85)\n"
        ),
    },
    {
        "id": "rock-001",
        "category": "Rock",
        "setting": "outdoor",
        "variation": 1,
        "description": (
            "A weathered granite boulder with an irregular faceted surface, flattened "
            "base, and mottled gray coloring."
        ),
        "color": (128, 128, 128),
        "code": _SCRIPT_HEADER
        + (
            "bpy.ops.mesh.primitive_ico_sphere_add(subdivisions=2, radius=0.6, location=(0.0, 0.0, 0.45))\n"
            "rock = bpy.context.active_object\n"
            "rock.scale = (1.0, 0.8, 0.65)\n"
            "rock.rotation_euler = (0.1, 0.05, 0.4)\n"
        ),
    },
    {
        "id": "fountain-001",
        "category": "Fountain",
        "setting": "outdoor",
        "variation": 1,
        "description": (
            "A classical stone garden fountain with a wide circular basin, a central "
            "pedestal column, and a smaller upper bowl that overflows."
        ),
        "color": (176, 196, 222),
        "code": _SCRIPT_HEADER
        + (
            "bpy.ops.mesh.primitive_cylinder_add(radius=1.0, depth=0.3, location=(0.0, 0.0, 0.15))\n"
            "basin = bpy.context.active_object\n"
            "basin.name = 'basin'\n"
            "\n"
            "bpy.ops.mesh.primitive_cylinder_add(radius=0.12, depth=0.9, location=(0.0, 0.0, 0.75))\n"
            "column = bpy.context.active_object\n"
            "column.name = 'column'\n"
            "\n"
            "bpy.ops.mesh.primitive_cylinder_add(radius=0.45, depth=0.12, location=(0.0, 0.0, 1.25))\n"
            "bowl = bpy.context.active_object\n"
            "bowl.name = 'upper_bowl'\n"
        ),
    },
    {
        "id": "bench-001",
        "category": "Bench",
        "setting": "outdoor",
        "variation": 1,
        "description": (
            "A park bench with horizontal wooden slats for the seat and backrest, "
            "supported by two cast-iron side frames."
        ),
        "color": (110, 78, 55),
        "code": _SCRIPT_HEADER
        + (
            "for i in range(3):\n"
            "    y = -0.1 + i * 0.1\n"
            "    bpy.ops.mesh.primitive_cube_add(size=1.0, location=(0.0, y, 0.45))\n"
            "    slat = bpy.context.active_object\n"
            "    slat.scale = (0.75, 0.04, 0.015)\n"
            "\n"
            "for i in range(2):\n"
            "    z = 0.65 + i * 0.12\n"
            "    bpy.ops.mesh.primitive_cube_add(size=1.0, location=(0.0, -0.18, z))\n"
            "    slat = bpy.context.active_object\n"
            "    slat.scale = (0.75, 0.015, 0.04)\n"
            "\n"
            "for x in (-0.65, 0.65):\n"
            "    bpy.ops.mesh.primitive_cube_add(size=1.0, location=(x, -0.05, 0.25))\n"
            "    frame = bpy.context.active_object\n"
            "    frame.scale = (0.03, 0.18, 0.25)\n"
        ),
    },
    {
        "id": "streetlamp-001",
        "category": "Street Lamp",
        "setting": "outdoor",
        "variation": 1,
        "description": (
            "A tall black street lamp with a fluted cast-iron pole, a curved arm, and "
            "a hanging lantern head with frosted glass panels."
        ),
        "color": (40, 40, 48),
        "code": _SCRIPT_HEADER
        + (
            "bpy.ops.mesh.primitive_cylinder_add(radius=0.3, depth=0.1, location=(0.0, 0.0, 0.05))\n"
            "bpy.ops.mesh.primitive_cylinder_add(radius=0.05, depth=3.6, location=(0.0, 0.0, 1.9))\n"
            "\n"
            "bpy.ops.mesh.primitive_cylinder_add(radius=0.03, depth=0.8, location=(0.4, 0.0, 3.7))\n"
            "arm = bpy.context.active_object\n"
            "arm.rotation_euler = (0.0, 1.5708, 0.0)\n"
            "\n"
            "bpy.ops.mesh.primitive_cone_add(radius1=0.16, radius2=0.05, depth=0.3, location=(0.8, 0.0, 3.55))\n"
            "head = bpy.context.active_object\n"
            "head.name = 'lantern_head'\n"
        ),
    },
]


def write_sample_corpus(out_dir: str | Path) -> Path:
    """Materialize the bundled sample corpus into a directory tree."""
    out_dir = Path(out_dir)
    (out_dir / "code").mkdir(parents=True, exist_ok=True)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)

    lines = []
    for entry in SAMPLE_ENTRIES:
        code_path = f"code/{entry['id']}.py"
        image_path = f"images/{entry['id']}.png"
        (out_dir / code_path).write_text(entry["code"], encoding="utf-8")
        write_solid_png(out_dir / image_path, 8, 8, entry["color"])
        lines.append(
            json.dumps(
                {
                    "id": entry["id"],
                    "category": entry["category"],
                    "setting": entry["setting"],
                    "variation": entry["variation"],
                    "description": entry["description"],
                    "code_path": code_path,
                    "image_path": image_path,
                },
                sort_keys=True,
            )
        )
    (out_dir / MANIFEST_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out_dir
