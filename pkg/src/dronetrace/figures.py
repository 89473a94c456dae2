"""Matplotlib figures for the report path.

Two figures per flight log: the ground track of every GPS fix, and a
telemetry profile (altitude plus battery over time).  These sit alongside
the CSV/KML exports as quick visual references; the KML remains the
artifact for real mapping viewers.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .flightlog import BatteryPayload, FlightLog, GpsPayload


def render_flight_figures(log: FlightLog, out_dir: Path, stem: str) -> list[Path]:
    """Render track and profile figures; returns the files written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    fixes = [
        (f.timestamp_ms, f.payload)
        for f in log.frames
        if isinstance(f.payload, GpsPayload) and f.payload.fix != 0
    ]
    batteries = [
        (f.timestamp_ms, f.payload.capacity_pct)
        for f in log.frames
        if isinstance(f.payload, BatteryPayload)
    ]

    if fixes:
        lons = [p.lon_e7 / 1e7 for _, p in fixes]
        lats = [p.lat_e7 / 1e7 for _, p in fixes]
        fig, ax = plt.subplots(figsize=(6, 6))
        ax.plot(lons, lats, "-", color="tab:blue", linewidth=1.2)
        ax.plot(lons[0], lats[0], "o", color="tab:green", label="start")
        ax.plot(lons[-1], lats[-1], "s", color="tab:red", label="end")
        ax.set_xlabel("longitude (deg)")
        ax.set_ylabel("latitude (deg)")
        ax.set_title(f"{stem}: ground track ({len(fixes)} fixes)")
        ax.legend(loc="best")
        ax.ticklabel_format(useOffset=False, style="plain")
        fig.tight_layout()
        track_path = out_dir / f"{stem}_track.png"
        fig.savefig(track_path, dpi=100)
        plt.close(fig)
        written.append(track_path)

    if fixes or batteries:
        fig, ax = plt.subplots(figsize=(8, 4))
        if fixes:
            ax.plot(
                [t / 1000.0 for t, _ in fixes],
                [p.alt_mm / 1000.0 for _, p in fixes],
                color="tab:blue",
                label="altitude (m)",
            )
            ax.set_ylabel("altitude (m)", color="tab:blue")
        ax.set_xlabel("time (s)")
        if batteries:
            ax2 = ax.twinx()
            ax2.plot(
                [t / 1000.0 for t, _ in batteries],
                [pct for _, pct in batteries],
                color="tab:orange",
                label="battery (%)",
            )
            ax2.set_ylabel("battery (%)", color="tab:orange")
            ax2.set_ylim(0, 105)
        ax.set_title(f"{stem}: telemetry profile")
        fig.tight_layout()
        profile_path = out_dir / f"{stem}_profile.png"
        fig.savefig(profile_path, dpi=100)
        plt.close(fig)
        written.append(profile_path)

    return written
