"""Exception types shared across the package.

The ``*Signal`` classes are control-flow exceptions raised inside the
interpreter and caught by the engine; they never escape the public API.
"""


class IgenError(Exception):
    pass


class ParseError(IgenError):
    def __init__(self, msg, line=0, col=0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.msg = msg
        self.line = line
        self.col = col


class PoolExhausted(IgenError):
    pass


class FormatError(IgenError):
    pass


class HashMismatch(FormatError):
    pass


class UnknownCallee(FormatError):
    pass


class DumpError(IgenError):
    pass


class TrapSignal(IgenError):
    def __init__(self, kind, detail=""):
        super().__init__(f"{kind}: {detail}" if detail else kind)
        self.kind = kind
        self.detail = detail


class ExitSignal(IgenError):
    def __init__(self, code=None):
        super().__init__(f"exit({code})")
        self.code = code


class RollbackSignal(IgenError):
    def __init__(self, constraint):
        super().__init__(repr(constraint))
        self.constraint = constraint


class BudgetSignal(IgenError):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason  # "steps" | "timeout"


class UnknownName(IgenError):
    pass
