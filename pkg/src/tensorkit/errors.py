"""
Error codes shared by every layer. The CLI reports them as JSON on stderr.
"""


class CodeMsgPair:
    def __init__(self, code, msg):
        self.errorCode = code
        self.errorMsg = msg

    def code(self):
        return self.errorCode

    def msg(self):
        return self.errorMsg


INVALID_MODE = CodeMsgPair(101, "Invalid mode")
DIM_MISMATCH = CodeMsgPair(102, "Dimension mismatch")
NONFINITE = CodeMsgPair(103, "Non-finite values")
NOT_CONVERGED = CodeMsgPair(104, "Factorization did not converge")
BAD_MAGIC = CodeMsgPair(201, "Bad tensor file magic")
BAD_LENGTH = CodeMsgPair(202, "Bad tensor file length")
IO_FAILURE = CodeMsgPair(203, "I/O failure - ")
INVALID_RANK = CodeMsgPair(301, "Invalid rank specification")
INDEX_RANGE = CodeMsgPair(302, "Index out of range")
INVALID_ARGUMENT = CodeMsgPair(303, "Invalid argument")
ZERO_SIGNAL = CodeMsgPair(304, "Zero signal")
INVALID_CONFIG = CodeMsgPair(401, "Invalid configuration")
SOLVER_DIVERGED = CodeMsgPair(501, "Solver produced non-finite iterates")
