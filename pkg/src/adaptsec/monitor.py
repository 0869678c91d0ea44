"""Event ingestion and anomaly detection.

Three anomaly classes come out of the event stream:

* ``new_device`` -- a device id seen connecting for the first time;
* ``frequent_new_devices`` -- the count of distinct first-seen devices inside
  the sliding window reached the threshold (fired on the crossing, so exactly
  once per crossing);
* ``latency_spike`` -- a latency sample far above the device's baseline,
  which can indicate traffic interception on the path to the device.

Replaying the same event log always yields the same anomaly sequence.
"""

from __future__ import annotations

import json
import statistics
from collections import deque
from dataclasses import dataclass, field

from .config import AdaptsecConfig
from .errors import InsufficientSamplesError, OutOfOrderEventError

EVENT_KINDS = ("device_connected", "device_disconnected", "command", "door_state", "latency_sample")
NETWORK_TAG = "wifi"


@dataclass(frozen=True)
class Event:
    id: str
    time: int
    kind: str
    subject: str
    attrs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"id": self.id, "time": self.time, "kind": self.kind,
                "subject": self.subject, "attrs": self.attrs}


def event_from_dict(payload: dict) -> Event:
    return Event(payload["id"], payload["time"], payload["kind"],
                 payload["subject"], payload.get("attrs", {}))


@dataclass(frozen=True)
class BaselineStats:
    count: int
    mean: float
    dispersion: float  # population standard deviation over the window


@dataclass(frozen=True)
class Anomaly:
    id: str
    kind: str  # new_device | frequent_new_devices | latency_spike
    tags: tuple[str, ...]
    evidence: tuple[str, ...]
    detected_at: int
    needs_human_fact: str | None = None
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id, "kind": self.kind, "tags": list(self.tags),
            "evidence": list(self.evidence), "detected_at": self.detected_at,
            "needs_human_fact": self.needs_human_fact, "payload": self.payload,
        }


class Monitor:
    """Stateful per-stream detector bank; one writer, replay-deterministic."""

    def __init__(self, config: AdaptsecConfig | None = None):
        self.config = config or AdaptsecConfig()
        self._last_seen: dict[str, int] = {}
        self._first_seen: dict[str, tuple[int, str]] = {}  # device -> (time, event id)
        self._latencies: dict[str, deque] = {}
        self._seq = 0
        self._emitted: set[tuple] = set()

    # -- ingestion --------------------------------------------------------

    def ingest(self, event: Event) -> list[Anomaly]:
        """Feed one event; returns the anomalies it triggers (possibly none).

        Events must arrive in non-decreasing time order per subject stream.
        """
        last = self._last_seen.get(event.subject)
        if last is not None and event.time < last:
            raise OutOfOrderEventError(
                f"event {event.id} at {event.time} is older than the stream head", last
            )
        self._last_seen[event.subject] = event.time

        if event.kind == "device_connected":
            return self._on_connected(event)
        if event.kind == "latency_sample":
            anomaly = self.detect_latency_spike(event)
            return [anomaly] if anomaly else []
        return []

    def _on_connected(self, event: Event) -> list[Anomaly]:
        if event.subject in self._first_seen:
            return []
        self._first_seen[event.subject] = (event.time, event.id)
        out = [self._emit(Anomaly(
            id=self._next_id(),
            kind="new_device",
            tags=(event.subject, NETWORK_TAG),
            evidence=(event.id,),
            detected_at=event.time,
            needs_human_fact="device_trust",
            payload={"attrs": event.attrs},
        ))]

        window_start = event.time - self.config.frequency_window_minutes
        recent = sorted(
            (t, device, eid) for device, (t, eid) in self._first_seen.items()
            if t > window_start
        )
        # Fire exactly on the crossing: this event pushed the count to the
        # threshold (counts only move by one per first sighting).
        if len(recent) == self.config.new_device_threshold:
            out.append(self._emit(Anomaly(
                id=self._next_id(),
                kind="frequent_new_devices",
                tags=tuple(device for _, device, _ in recent) + (NETWORK_TAG,),
                evidence=tuple(eid for _, _, eid in recent),
                detected_at=event.time,
                payload={
                    "window_minutes": self.config.frequency_window_minutes,
                    "distinct_new_devices": len(recent),
                },
            )))
        return out

    # -- latency ----------------------------------------------------------

    def latency_baseline(self, device: str) -> BaselineStats:
        """Mean and population standard deviation over the sample window."""
        window = self._latencies.get(device, ())
        if len(window) < self.config.latency_min_samples:
            raise InsufficientSamplesError(
                f"{device} has {len(window)} samples, need {self.config.latency_min_samples}"
            )
        values = list(window)
        return BaselineStats(len(values), statistics.fmean(values), statistics.pstdev(values))

    def detect_latency_spike(self, event: Event) -> Anomaly | None:
        """Judge one latency sample against the device's prior baseline, then
        record it into the window.  No baseline yet means no detection."""
        latency = event.attrs.get("latency_ms")
        if latency is None or latency <= 0:
            raise ValueError(f"latency_sample {event.id} needs latency_ms > 0")
        window = self._latencies.setdefault(
            event.subject, deque(maxlen=self.config.latency_window_samples)
        )
        anomaly = None
        if len(window) >= self.config.latency_min_samples:
            values = list(window)
            mean = statistics.fmean(values)
            dispersion = statistics.pstdev(values)
            # Flat baselines degenerate to "above the mean"; the absolute
            # floor keeps tiny wobbles from ever counting.
            spike = (latency > mean + self.config.latency_k * dispersion
                     and latency >= self.config.latency_floor_ms)
            if spike:
                anomaly = self._emit(Anomaly(
                    id=self._next_id(),
                    kind="latency_spike",
                    tags=(event.subject,),
                    evidence=(event.id,),
                    detected_at=event.time,
                    payload={
                        "latency_ms": latency,
                        "baseline_mean": mean,
                        "baseline_dispersion": dispersion,
                        "k": self.config.latency_k,
                        "floor_ms": self.config.latency_floor_ms,
                    },
                ))
        window.append(latency)
        return anomaly

    # -- bookkeeping --------------------------------------------------------

    def _next_id(self) -> str:
        self._seq += 1
        return f"an-{self._seq:04d}"

    def _emit(self, anomaly: Anomaly) -> Anomaly:
        key = (anomaly.kind, anomaly.tags, anomaly.evidence)
        if key in self._emitted:
            raise AssertionError(f"duplicate anomaly for evidence set {key}")
        self._emitted.add(key)
        return anomaly

    def known_devices(self) -> list[str]:
        return sorted(self._first_seen)

    # Snapshot support keeps replay tests honest about monitor state.

    def snapshot(self) -> dict:
        return {
            "last_seen": dict(self._last_seen),
            "first_seen": {d: list(v) for d, v in self._first_seen.items()},
            "latencies": {d: list(w) for d, w in self._latencies.items()},
            "seq": self._seq,
            "emitted": sorted([list(k[0:1]) + [list(k[1]), list(k[2])] for k in self._emitted]),
        }


def read_event_log(path) -> list[Event]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                events.append(event_from_dict(json.loads(line)))
    return events


def write_event_log(path, events: list[Event]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event.to_dict(), separators=(",", ":")) + "\n")
