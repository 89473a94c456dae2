"""Error types shared across the toolkit.

Every error carries a stable ``code`` string (what went wrong) and an
``exit_code`` used by the CLI: 1 for validation/gate failures, 2 for
integrity failures, 3 for I/O failures.
"""

from __future__ import annotations


class DroneTraceError(Exception):
    """Base class for all toolkit errors."""

    code = "ERROR"
    exit_code = 1

    def __str__(self) -> str:
        msg = super().__str__()
        return f"{self.code}: {msg}" if msg else self.code


# --- validation / gate errors (exit 1) ---

class DuplicateCaseId(DroneTraceError):
    code = "DUPLICATE_CASE_ID"


class EmptyField(DroneTraceError):
    code = "EMPTY_FIELD"


class DuplicateExhibitId(DroneTraceError):
    code = "DUPLICATE_EXHIBIT_ID"


class DanglingParent(DroneTraceError):
    code = "DANGLING_PARENT"


class UnknownExhibit(DroneTraceError):
    code = "UNKNOWN_EXHIBIT"


class TimeRegression(DroneTraceError):
    code = "TIME_REGRESSION"


class IllegalTransition(DroneTraceError):
    code = "ILLEGAL_TRANSITION"


class MissingJustification(DroneTraceError):
    code = "MISSING_JUSTIFICATION"


class GateBlocked(DroneTraceError):
    """Raised when a gated step or report issuance is blocked.

    Carries the GateDecision that produced the block.
    """

    code = "GATE_BLOCKED"

    def __init__(self, message: str, decision=None):
        super().__init__(message)
        self.decision = decision


class DestExists(DroneTraceError):
    code = "DEST_EXISTS"


class SourceUnverified(DroneTraceError):
    code = "SOURCE_UNVERIFIED"


class NotAClone(DroneTraceError):
    code = "NOT_A_CLONE"


class AlreadyClosed(DroneTraceError):
    code = "ALREADY_CLOSED"


class InvalidFrame(DroneTraceError):
    code = "INVALID_FRAME"


class InvalidParams(DroneTraceError):
    code = "INVALID_PARAMS"


class CapacityExceeded(DroneTraceError):
    code = "CAPACITY_EXCEEDED"


class LockHeld(DroneTraceError):
    code = "LOCK_HELD"


# --- flight-log parse errors (exit 1: the file is not readable as claimed) ---

class ParseError(DroneTraceError):
    """Base for strict-parser failures; ``offset`` points at the fault."""

    def __init__(self, message: str = "", offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class BadMagic(ParseError):
    code = "BAD_MAGIC"


class BadVersion(ParseError):
    code = "BAD_VERSION"


class FrameCrcMismatch(ParseError):
    code = "FRAME_CRC_MISMATCH"


class MissingFooter(ParseError):
    code = "MISSING_FOOTER"


class FooterMismatch(ParseError):
    code = "FOOTER_MISMATCH"


class Truncated(ParseError):
    code = "TRUNCATED"


# --- integrity errors (exit 2) ---

class LedgerTampered(DroneTraceError):
    code = "LEDGER_TAMPERED"
    exit_code = 2

    def __init__(self, message: str, sequence: int | None = None):
        super().__init__(message)
        self.sequence = sequence


class IntegrityMismatch(DroneTraceError):
    """Digest mismatch discovered where verified data was required."""

    code = "INTEGRITY_MISMATCH"
    exit_code = 2


class MissingArtifact(DroneTraceError):
    code = "MISSING_ARTIFACT"
    exit_code = 2


# --- I/O errors (exit 3) ---

class MissingFile(DroneTraceError):
    code = "MISSING_FILE"
    exit_code = 3


class IoFailure(DroneTraceError):
    code = "IO_FAILURE"
    exit_code = 3


class WriteFailure(DroneTraceError):
    code = "WRITE_FAILURE"
    exit_code = 3
