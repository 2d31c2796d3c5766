"""Warning construction, deduplication, SMS checks, report rendering."""

import json

from .symbols import collect_taints

INFO_LEAK = "INFO_LEAK"
SMS_HARDCODED = "SMS_HARDCODED"
SMS_AUTOREPLY = "SMS_AUTOREPLY"


class Warning:
    """One detected behavior, keyed by its source-API set and sink API."""

    def __init__(self, kind, source_apis, sink_api, locations, component,
                 m, event_trace, sequence_index=0):
        self.kind = kind
        self.source_apis = frozenset(source_apis)
        self.sink_api = sink_api
        self.locations = tuple(locations)  # dicts: role/api/class/method/instruction
        self.component = component
        self.m = m
        self.event_trace = tuple(event_trace)
        self.sequence_index = sequence_index

    def key(self):
        return (self.kind, self.source_apis, self.sink_api)

    def to_dict(self):
        return {
            "kind": self.kind,
            "source_apis": sorted(self.source_apis),
            "sink_api": self.sink_api,
            "locations": [dict(loc) for loc in self.locations],
            "component": self.component,
            "detected_at_m": self.m,
            "event_trace": list(self.event_trace),
        }


def source_locations(tags):
    return [
        {"role": "source", "api": t.source_api, "class": t.location[0],
         "method": t.location[1], "instruction": t.location[2]}
        for t in sorted(tags, key=lambda t: (t.source_api, t.location))
    ]


def sink_location(api, location):
    return {"role": "sink", "api": api, "class": location[0],
            "method": location[1], "instruction": location[2]}


def dedup_warnings(raw):
    """One warning per (kind, source set, sink); smaller source sets for the
    same kind and sink are dropped when another warning subsumes them.

    Keeps the first representative of each surviving key, so the minimal-m,
    earliest-sequence metadata wins.
    """
    by_key = {}
    order = []
    for w in raw:
        if w.key() not in by_key:
            by_key[w.key()] = w
            order.append(w.key())
    kept = []
    for key in order:
        kind, sources, sink = key
        subsumed = any(
            okind == kind and osink == sink and sources < osources
            for (okind, osources, osink) in by_key
        )
        if not subsumed:
            kept.append(by_key[key])
    return kept


def detect_sms_attacks(sms_rule, arg_entries, config, location, context):
    """SMS checks at a send call site.

    SMS_HARDCODED fires when the recipient argument carries a constant that
    originates in app code; SMS_AUTOREPLY fires when the recipient is tainted
    by an originating-address API.  Numbers arriving from configuration files
    or other APIs carry neither mark and are (knowingly) not reported.
    """
    idx = sms_rule["recipient_arg_index"]
    if idx >= len(arg_entries):
        return []
    recipient = arg_entries[idx]
    out = []
    det = recipient.details
    if det.const_value is not None and det.const_from_code and isinstance(det.const_value, str):
        out.append(Warning(
            SMS_HARDCODED, frozenset(), sms_rule["signature"],
            [sink_location(sms_rule["signature"], location)],
            context["component"], context["m"], context["event_trace"],
            context["sequence_index"],
        ))
    origin_tags = {
        t for t in collect_taints(recipient)
        if t.source_api in config.originating_address_apis
    }
    if origin_tags:
        out.append(Warning(
            SMS_AUTOREPLY, {t.source_api for t in origin_tags}, sms_rule["signature"],
            source_locations(origin_tags) + [sink_location(sms_rule["signature"], location)],
            context["component"], context["m"], context["event_trace"],
            context["sequence_index"],
        ))
    return out


class Report:
    def __init__(self, app_id, warnings, m_reached, sequences_analyzed,
                 elapsed, finished, error=None):
        self.app_id = app_id
        self.warnings = warnings
        self.m_reached = m_reached
        self.sequences_analyzed = sequences_analyzed
        self.elapsed = elapsed
        self.finished = finished
        self.error = error

    def to_dict(self):
        # elapsed time is deliberately left out: reports must be byte-identical
        # across runs (it is shown by the table renderer instead)
        doc = {
            "app_id": self.app_id,
            "finished": self.finished,
            "m_reached": self.m_reached,
            "sequences_analyzed": self.sequences_analyzed,
            "warnings": [w.to_dict() for w in self.warnings],
        }
        if self.error is not None:
            doc["error"] = self.error
        return doc


def render_report(report, fmt):
    """Render a report as stable JSON or a terminal table."""
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if fmt == "table":
        lines = [
            "app: %s" % report.app_id,
            "finished: %s   m reached: %s   sequences: %d   elapsed: %.2fs"
            % (report.finished, report.m_reached, report.sequences_analyzed,
               report.elapsed),
        ]
        if report.error:
            lines.append("error: %s" % report.error)
        if not report.warnings:
            lines.append("no warnings")
        else:
            lines.append("%-14s %-40s %-28s %s" % ("kind", "sources", "sink", "trace"))
            for w in report.warnings:
                lines.append("%-14s %-40s %-28s %s" % (
                    w.kind, ",".join(sorted(w.source_apis)) or "-", w.sink_api,
                    " > ".join(w.event_trace),
                ))
        return "\n".join(lines)
    raise ValueError("unknown report format %r" % fmt)
