class DiffcoreError(Exception):
    pass


class ShapeError(DiffcoreError, ValueError):
    """Operand shapes do not conform for an op."""

    def __init__(self, op: str, *shapes, detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        msg = f"{op}: incompatible shapes " + " vs ".join(str(s) for s in self.shapes)
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DegenerateVectorError(DiffcoreError, ValueError):
    """A vector whose norm is at or below the division guard."""


class BackwardError(DiffcoreError, RuntimeError):
    pass


class GradcheckError(DiffcoreError, RuntimeError):
    pass


class CheckpointFormatError(DiffcoreError, ValueError):
    pass
