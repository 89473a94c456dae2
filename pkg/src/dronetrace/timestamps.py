"""Timestamp handling.

All timestamps in the toolkit are timezone-aware UTC datetimes truncated to
millisecond precision, because the custody-ledger hash covers unix
milliseconds and persisted documents must round-trip exactly.
"""

from __future__ import annotations

from datetime import datetime, timezone

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def to_utc_ms(ts: datetime) -> datetime:
    """Normalize to UTC and truncate to whole milliseconds."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    ts = ts.astimezone(timezone.utc)
    return ts.replace(microsecond=(ts.microsecond // 1000) * 1000)


def unix_ms(ts: datetime) -> int:
    ts = to_utc_ms(ts)
    return int((ts - EPOCH).total_seconds() * 1000 + 0.5)


def from_unix_ms(ms: int) -> datetime:
    return datetime.fromtimestamp(ms / 1000.0, tz=timezone.utc)


def format_rfc3339(ts: datetime) -> str:
    ts = to_utc_ms(ts)
    base = ts.strftime("%Y-%m-%dT%H:%M:%S")
    return f"{base}.{ts.microsecond // 1000:03d}+00:00"


def parse_rfc3339(text: str) -> datetime:
    """Parse an RFC 3339 timestamp ('Z' or numeric offset) to UTC."""
    cleaned = text.strip()
    if cleaned.endswith(("Z", "z")):
        cleaned = cleaned[:-1] + "+00:00"
    return to_utc_ms(datetime.fromisoformat(cleaned))


def coerce_timestamp(value) -> datetime:
    """Accept datetime or RFC 3339 text (YAML loaders may yield either)."""
    if isinstance(value, datetime):
        return to_utc_ms(value)
    return parse_rfc3339(str(value))
