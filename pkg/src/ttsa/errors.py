"""Exception types shared across the package."""


class TTSAError(Exception):
    """Base class for all package errors."""


class ValidationError(TTSAError, ValueError):
    """Bad input or configuration (CLI exit code 1)."""


class NumericalError(TTSAError, ArithmeticError):
    """Numerical failure during a computation (CLI exit code 2)."""


class SingularMatrix(NumericalError):
    def __init__(self, which, detail=""):
        self.which = which
        msg = f"{which} is not invertible to working precision"
        super().__init__(msg + (f" ({detail})" if detail else ""))


class AssumptionViolated(ValidationError):
    def __init__(self, which, value=None):
        self.which = which
        self.value = value
        msg = f"positive-definiteness assumption fails for {which}"
        if value is not None:
            msg += f": lambda_min of symmetric part = {value:.6g}"
        super().__init__(msg)


class DegenerateTimescales(ValidationError):
    def __init__(self, alpha, beta):
        super().__init__(
            f"step-size assumption A2 requires 1 > alpha > beta > 0, got alpha={alpha}, beta={beta}")


class NonFinite(NumericalError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"non-finite iterate produced at n={index}")


class CapExceeded(NumericalError):
    def __init__(self, name, cap):
        self.name = name
        self.cap = cap
        super().__init__(f"threshold {name} not found below scan cap {cap:g}")


class MissingNoise(ValidationError):
    def __init__(self):
        super().__init__("trajectory has no recorded noise; rerun with record_noise=True")


class DegenerateWindow(ValidationError):
    def __init__(self, detail):
        super().__init__(f"rate-fit window is degenerate: {detail}")


class NotErgodic(ValidationError):
    def __init__(self, detail="transition matrix is not irreducible and aperiodic"):
        super().__init__(detail)


class RankDeficient(ValidationError):
    def __init__(self, rank, d):
        super().__init__(f"feature matrix has rank {rank} < d={d}")


class GenerationFailed(NumericalError):
    def __init__(self, tries):
        super().__init__(f"no MDP satisfying the assumptions after {tries} tries")
