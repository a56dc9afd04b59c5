"""Toolchain for authoring wearable cognitive-assistance tasks from
demonstration video: step segmentation, object association, workflow
editing, label propagation, dataset preparation, task-model compilation,
and a streaming guidance runtime."""

__version__ = "0.1.0"
