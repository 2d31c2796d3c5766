import io
import json

import pytest

from lifetaint.analysis import AnalysisContext, analyze_component
from lifetaint.cli import RunConfig, analyze_app, main, run
from lifetaint.errors import ConfigError
from lifetaint.sequences import build_plan

from conftest import all_corpus_paths, corpus_app, corpus_path


def run_cli(paths, **kw):
    out = io.StringIO()
    cfg = RunConfig(app_paths=list(paths), out=out, **kw)
    status = run(cfg)
    return status, out.getvalue()


class TestRun:
    def test_corpus_run_reports_everything(self):
        status, text = run_cli(all_corpus_paths())
        assert status == 0
        docs = [json.loads(chunk) for chunk in _split_json(text)]
        by_id = {d["app_id"]: d for d in docs}
        assert by_id["motivating_example"]["m_reached"] == 2
        kinds = {w["kind"] for w in by_id["motivating_example"]["warnings"]}
        assert kinds == {"INFO_LEAK"}
        assert by_id["activity_eveseq1"]["m_reached"] == 1
        assert by_id["sms_confignum"]["warnings"] == []

    def test_m_max_one_motivating_is_clean(self):
        status, text = run_cli([corpus_path("motivating_example")], m_max=1)
        assert status == 0
        doc = json.loads(text)
        assert doc["warnings"] == [] and doc["m_reached"] == 1

    def test_escalation_stops_after_detection(self, models, config):
        # a warning found at m=1 ends the escalation even with m_max=2
        app = corpus_app("activity_eveseq1")
        report = analyze_app(app, models, config, m_max=2)
        assert report.m_reached == 1

    def test_mixed_components_analyzed_iteratively(self):
        # a clean activity plus a leaking service in one app: the service
        # component produces the warning at m=1
        status, text = run_cli([corpus_path("mixed_components")])
        assert status == 0
        doc = json.loads(text)
        assert doc["m_reached"] == 1
        assert [w["component"] for w in doc["warnings"]] == ["BeaconService"]
        assert doc["warnings"][0]["event_trace"][0] == "createAndStart"

    def test_aui_misc_pair_needs_two_way(self):
        # the leak spans a miscellaneous callback and an AUI callback, so it
        # appears only under 2-way permutation
        status, text = run_cli([corpus_path("aui_misc_pair")], m_max=1)
        assert json.loads(text)["warnings"] == []
        status, text = run_cli([corpus_path("aui_misc_pair")], m_max=2)
        doc = json.loads(text)
        assert doc["m_reached"] == 2 and len(doc["warnings"]) == 1
        w = doc["warnings"][0]
        assert w["source_apis"] == ["LocationManager.getLastKnownLocation/1"]
        assert w["event_trace"] == ["createActivity", "onGeocodeTaskComplete",
                                    "onEditorAction"]

    def test_determinism_byte_identical(self):
        _, first = run_cli(all_corpus_paths(), m_max=2)
        _, second = run_cli(all_corpus_paths(), m_max=2)
        assert first == second

    def test_missing_app_among_several(self):
        status, text = run_cli([corpus_path("activity_eveseq1"), "/nope/gone.app"])
        assert status == 0
        docs = [json.loads(chunk) for chunk in _split_json(text)]
        assert len(docs) == 2
        failed = [d for d in docs if "error" in d]
        assert len(failed) == 1 and failed[0]["warnings"] == []

    def test_bad_models_dir_is_config_error(self):
        status, _ = run_cli([corpus_path("activity_eveseq1")], models_dir="/nope")
        assert status == 1

    def test_analysis_error_aborts_only_that_app(self, tmp_app):
        # reading a never-bound register is an analysis-time contract
        # violation: the app is reported with a diagnostic, the run continues
        broken = tmp_app({
            "app_id": "broken",
            "classes": [{
                "name": "Main", "parent_kind": "ACTIVITY", "static_fields": [],
                "methods": [{
                    "sig": "main/0", "params": ["this"],
                    "instructions": [["MOVE", "a", "ghost"], ["RETURN_VOID"]],
                    "labels": {},
                }],
            }],
            "components": [{"class": "Main", "kind": "ACTIVITY",
                            "aui_callbacks": [], "misc_callbacks": ["main"]}],
        })
        status, text = run_cli([broken, corpus_path("activity_eveseq1")])
        assert status == 0
        docs = [json.loads(chunk) for chunk in _split_json(text)]
        assert "ghost" in docs[0]["error"]
        assert docs[1]["warnings"]

    def test_table_format(self):
        status, text = run_cli([corpus_path("sms_hardcoded")], fmt="table")
        assert status == 0
        assert "SMS_HARDCODED" in text

    def test_dump_cfg(self):
        status, text = run_cli([corpus_path("flow_sensitivity")], dump_cfg=True)
        assert status == 0
        assert "digraph" in text

    def test_jobs_parallel_matches_serial(self):
        _, serial = run_cli(all_corpus_paths())
        _, parallel = run_cli(all_corpus_paths(), jobs=4)
        assert serial == parallel

    def test_killed_run_flagged_and_exit_2(self, models, config):
        app = corpus_app("motivating_example")
        fake = [0.0]

        def clock():
            fake[0] += 100.0
            return fake[0]

        report = analyze_app(app, models, config, m_max=2, budget_secs=50,
                             clock=clock)
        assert not report.finished

    def test_killed_cli_run_exits_2(self):
        status, text = run_cli([corpus_path("motivating_example")],
                               budget_secs=1e-9, m_max=2)
        assert status == 2
        assert json.loads(text)["finished"] is False

    def test_empty_component_yields_no_warnings(self, models, config):
        from lifetaint.sequences import PermutationPlan
        app = corpus_app("activity_eveseq1")
        ctx = AnalysisContext(app, config)
        got = analyze_component(app, app.components[0],
                                PermutationPlan(1, (), ()), ctx)
        assert got == [] and ctx.sequences_analyzed == 0

    def test_budget_killed_partial_warnings(self, models, config):
        # give the context almost no budget mid-flight: partial results kept
        app = corpus_app("activity_eveseq2")
        comp = app.components[0]
        ctx = AnalysisContext(app, config, budget_secs=1e9)
        plan = build_plan(models["ACTIVITY"], comp, 1)
        analyze_component(app, comp, plan, ctx)
        assert ctx.warnings  # sanity: this app warns at m=1

        ctx2 = AnalysisContext(app, config, budget_secs=-1.0)
        analyze_component(app, comp, plan, ctx2)
        assert ctx2.killed and ctx2.sequences_analyzed == 0


class TestArgs:
    def test_bad_m_max(self):
        with pytest.raises(ConfigError):
            RunConfig(app_paths=["x"], m_max=0)

    def test_bad_budget(self):
        with pytest.raises(ConfigError):
            RunConfig(app_paths=["x"], budget_secs=0)

    def test_bad_format(self):
        with pytest.raises(ConfigError):
            RunConfig(app_paths=["x"], fmt="xml")

    def test_main_entry(self, capsys):
        status = main(["--app", corpus_path("sms_hardcoded"), "--m-max", "1"])
        assert status == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["app_id"] == "sms_hardcoded"

    def test_main_bad_config_exit_1(self, capsys):
        status = main(["--app", "x.app", "--models", "/nope"])
        assert status == 1


def _split_json(text):
    """Split concatenated pretty-printed JSON documents."""
    chunks, depth, start = [], 0, None
    for i, ch in enumerate(text):
        if ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                chunks.append(text[start:i + 1])
    return chunks
