"""
GoldNeck: motor de inferencia y entrenamiento de juguete para el neck
Gather-and-Distribute (GD) de detectores tipo YOLO.
"""

__version__ = "0.1.0"
