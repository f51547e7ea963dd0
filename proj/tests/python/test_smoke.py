import json
from fractions import Fraction

import pytest

import datapool


def test_rewards_conserve_pool():
    split = datapool.compute_rewards({"a": 1, "b": 1, "c": 1}, 100, 1_000_000)
    assert split["pool_minor"] == 100
    assert sum(split["rewards"].values()) == 100
    assert split["rewards"] == {"a": 34, "b": 33, "c": 33}


def test_rewards_match_fraction_quota():
    tokens = {"x": 7, "y": 13, "z": 980}
    split = datapool.compute_rewards(tokens, 123_457, 250_000)
    pool = 123_457 * 250_000 // 1_000_000
    total = sum(tokens.values())
    for cid, t in tokens.items():
        assert abs(Fraction(split["rewards"][cid]) - Fraction(pool * t, total)) < 1


def test_no_contributions():
    split = datapool.compute_rewards({"a": 0}, 1000, 100_000)
    assert split["no_contributions"]
    assert split["undistributed_minor"] == 100


def test_bad_alpha_raises_with_code():
    with pytest.raises(datapool.DatapoolError) as info:
        datapool.compute_rewards({"a": 1}, 10, 2_000_000)
    assert info.value.code


def test_ratio():
    num, den, dec = datapool.contribution_ratio("a", {"a": 1, "b": 2})
    assert (num, den, dec) == (1, 3, "0.333333")


def test_forecast():
    f = datapool.expected_payout(
        "2026-01-16T00:00:00Z", "2026-01-01T00:00:00Z", "2026-01-31T00:00:00Z", 1500, {"a": 1, "b": 1}, 100_000
    )
    assert f["projected_epoch_revenue_minor"] == 3000


def test_text_and_filters():
    assert datapool.normalize("é\r\n") == "é"
    assert datapool.count_tokens("one two  three") == 3
    assert datapool.apply_filters("short") == "too_short"
    assert datapool.apply_filters("a perfectly ordinary sentence of readable text here") is None


def test_fingerprints():
    assert datapool.exact_fingerprint("") == "cae66941d9efbd404e4d88758ea67670"
    assert datapool.exact_fingerprint("abc") == "cf4ab791c62b8d2b2109c90275287816"
    sig = datapool.minhash_signature("the quick brown fox jumps over the lazy dog")
    assert len(sig) == 128
    assert datapool.estimate_jaccard(sig, sig) == 1.0


def test_dedup_index():
    idx = datapool.DedupIndex()
    base = " ".join(f"word{i}" for i in range(80))
    assert idx.add(base)
    assert not idx.add(base)
    assert idx.query(base)[0] == "exact"
    near = base.replace("word40", "other40")
    assert idx.query(near)[0] == "near"
    assert idx.query("entirely different content with nothing shared at all") is None
    assert len(idx) == 1


def test_pipeline_report():
    doc = " ".join(f"token{i}" for i in range(20))
    body = "\n".join([json.dumps({"text": doc}), json.dumps({"text": doc}), "{broken"]) + "\n"
    report = datapool.run_pipeline(body)
    assert report["accepted_tokens"] == 20
    assert report["rejections"]["exact_duplicate"] == 1
    assert report["rejections"]["unparseable"] == 1


def test_platform_round_trip(tmp_path):
    p = datapool.Platform(str(tmp_path / "d"), "dp_admin", genesis="2026-01-01T00:00:00Z", sync=False)
    cid, token = p.register_contributor("alice")
    assert token.startswith("dp_")
    doc = " ".join(f"w{i}" for i in range(40))
    sid = p.submit(cid, json.dumps({"text": doc}) + "\n")
    p.process_all()
    assert p.report(sid)["status"] == "finalized"
    event = {"event_id": "e1", "occurred_at": "2026-01-02T00:00:00Z", "amount_minor": 5000, "currency": "USD"}
    assert p.ingest_revenue(event) == "accepted"
    assert p.ingest_revenue(event) == "duplicate"
    p.set_time("2026-01-31T00:00:00Z")
    statement = p.close_epoch(1)
    assert statement["pool_minor"] == 500
    assert p.metrics(cid)["current_monetary_reward_minor"] == 500
