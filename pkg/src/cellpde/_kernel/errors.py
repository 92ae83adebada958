class IntegrationFailure(RuntimeError):
    """Raised when the mechanics integration cannot proceed.

    Carries the simulation time that was reached before the failure
    (step-size underflow or loss of node ordering).
    """

    def __init__(self, time_reached: float, message: str | None = None):
        self.time_reached = float(time_reached)
        super().__init__(
            message or f"integration failed at t = {time_reached:.6g}"
        )
