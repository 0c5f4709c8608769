"""Interactive companion add-on for the generation service.

Enables a sidebar panel where users pick a provider, enter prompts, generate
objects into the live scene through the HTTP service, and iterate with
follow-ups. LLM credentials stay with the service; the add-on only holds the
service URL and an optional auth token in its preferences.
"""

import bpy

from . import ops, panel
from .state import state

bl_info = {
    "name": "RAG 3D Generator",
    "author": "rag3d",
    "version": (0, 1, 0),
    "blender": (3, 6, 0),
    "location": "View3D > Sidebar > RAG3D",
    "description": "Generate 3D objects from text via a retrieval-augmented service",
    "category": "Object",
}

CLASSES = ops.OPERATORS + (panel.RAG3D_PT_panel,)


def _provider_items(self, context):
    return [(p, p, "") for p in state.providers] or [("", "none", "")]


def _sync_prompt(self, context):
    state.prompt = self.rag3d_prompt


def _sync_provider(self, context):
    state.provider_id = self.rag3d_provider


def _sync_replace(self, context):
    state.replace_previous = self.rag3d_replace


def register():
    for cls in CLASSES:
        bpy.utils.register_class(cls)
    bpy.types.WindowManager.rag3d_prompt = bpy.props.StringProperty(
        name="Prompt", default="", update=_sync_prompt
    )
    bpy.types.WindowManager.rag3d_provider = bpy.props.EnumProperty(
        name="Provider", items=_provider_items, update=_sync_provider
    )
    bpy.types.WindowManager.rag3d_replace = bpy.props.BoolProperty(
        name="Replace previous result", default=True, update=_sync_replace
    )


def unregister():
    for cls in reversed(CLASSES):
        bpy.utils.unregister_class(cls)
    for prop in ("rag3d_prompt", "rag3d_provider", "rag3d_replace"):
        if hasattr(bpy.types.WindowManager, prop):
            delattr(bpy.types.WindowManager, prop)
