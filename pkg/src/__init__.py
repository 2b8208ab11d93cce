"""
FlexEvent Toolkit

Event voxelization, adaptive event-frame fusion, frequency-adaptive
pseudo-label refinement and multi-frequency COCO evaluation, runnable at desk
scale on synthetic event scenes.
"""

__version__ = "0.1.0"
__description__ = "Event-frame detection toolkit with multi-frequency evaluation"
