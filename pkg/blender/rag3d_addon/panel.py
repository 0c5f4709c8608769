"""Sidebar panel: provider picker, prompt box, Generate/Refine, status."""

import bpy

from .state import state


class RAG3D_PT_panel(bpy.types.Panel):
    bl_idname = "RAG3D_PT_panel"
    bl_label = "RAG 3D Generator"
    bl_space_type = "VIEW_3D"
    bl_region_type = "UI"
    bl_category = "RAG3D"

    def draw(self, context):
        layout = self.layout

        box = layout.box()
        box.label(text=f"Service: {state.service_url}")
        box.operator("rag3d.connect")

        if not state.connected:
            layout.label(text=f"Status: {state.status}")
            if state.last_error:
                layout.label(text=state.last_error[:120], icon="ERROR")
            return

        row = layout.row()
        row.label(text="Provider:")
        if state.providers:
            # Provider list comes from the service registry, never hardcoded.
            row.prop_menu_enum(context.window_manager, "rag3d_provider", text=state.provider_id or "select")
        else:
            row.label(text="(none registered)")

        layout.prop(context.window_manager, "rag3d_prompt", text="Prompt")
        layout.prop(context.window_manager, "rag3d_replace", text="Replace previous result")

        actions = layout.row()
        actions.enabled = not state.busy
        generate = actions.row()
        generate.enabled = state.connected and not state.busy
        generate.operator("rag3d.generate")
        refine = actions.row()
        refine.enabled = state.connected and not state.busy and state.turn_count > 0
        refine.operator("rag3d.refine")

        layout.label(text=f"Status: {state.status}")
        if state.last_error:
            layout.label(text=state.last_error[:120], icon="ERROR")
