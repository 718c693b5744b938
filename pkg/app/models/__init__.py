from app.models.mesh import ConstraintSet, FaceTable, InterfaceSet, QuadMesh
from app.models.state import CellCoefficients, FieldState, MechState

__all__ = ["ConstraintSet", "FaceTable", "InterfaceSet", "QuadMesh", "CellCoefficients", "FieldState", "MechState"]
