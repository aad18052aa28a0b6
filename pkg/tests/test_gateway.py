import json
import threading
import time

import pytest

from spatialforge.gateway import (BackendRequest, BackendResponse, Cassette,
                                  CassetteEntry, ExhaustedRetries, Gateway,
                                  ReplayMiss, RetryPolicy, canonical_bytes,
                                  canonical_hash)


def req(payload=None, seed=0, backend="prober-a"):
    return BackendRequest(backend_id=backend, op_kind="Answer",
                          payload=payload or {"q": "x"}, seed=seed)


class TestCanonicalHash:
    def test_identical_requests_hash_equal(self):
        assert canonical_hash(req()) == canonical_hash(req())

    def test_seed_changes_hash(self):
        assert canonical_hash(req(seed=1)) != canonical_hash(req(seed=2))

    def test_key_order_irrelevant(self):
        a = req(payload={"a": 1, "b": [1.5, "z"]})
        b = req(payload=json.loads('{"b": [1.5, "z"], "a": 1}'))
        assert canonical_hash(a) == canonical_hash(b)

    def test_round_trip_serialization_stable(self):
        payload = {"x": 0.1, "y": [1, 2.25], "s": "héllo"}
        reparsed = json.loads(canonical_bytes(payload).decode())
        assert canonical_hash(req(payload=payload)) == \
            canonical_hash(req(payload=reparsed))

    def test_hash_is_64bit_hex(self):
        h = canonical_hash(req())
        assert len(h) == 16
        int(h, 16)


class TestReplay:
    def _cassette(self, r):
        c = Cassette()
        c.append(CassetteEntry(
            request_hash=canonical_hash(r), backend_id=r.backend_id,
            request_echo={}, response=BackendResponse(status="Ok", body="hit")))
        return c

    def test_replay_returns_stored_response(self):
        r = req()
        gw = Gateway(mode="replay", cassette=self._cassette(r))
        assert gw.invoke(r).body == "hit"

    def test_replay_miss_raises(self):
        gw = Gateway(mode="replay", cassette=self._cassette(req()))
        with pytest.raises(ReplayMiss):
            gw.invoke(req(seed=99))

    def test_replay_never_touches_network(self):
        # a transport that explodes proves replay does no I/O
        def bomb(_):
            raise AssertionError("network touched in replay mode")
        r = req()
        gw = Gateway(mode="replay", cassette=self._cassette(r), transport=bomb)
        assert gw.invoke(r).body == "hit"


class TestRetries:
    def test_transport_error_retried_then_ok(self):
        attempts = []

        def flaky(r):
            attempts.append(1)
            if len(attempts) < 3:
                return BackendResponse(status="TransportError", body="boom")
            return BackendResponse(status="Ok", body="fine")

        gw = Gateway(mode="live", transport=flaky,
                     policy=RetryPolicy(max_attempts=3))
        assert gw.invoke(req()).body == "fine"
        assert len(attempts) == 3

    def test_exhausted_retries(self):
        gw = Gateway(mode="live",
                     transport=lambda r: BackendResponse(status="TransportError"),
                     policy=RetryPolicy(max_attempts=2))
        with pytest.raises(ExhaustedRetries):
            gw.invoke(req())

    def test_refused_is_terminal(self):
        calls = []

        def refuse(r):
            calls.append(1)
            return BackendResponse(status="Refused", body="no")

        gw = Gateway(mode="live", transport=refuse,
                     policy=RetryPolicy(max_attempts=5))
        assert gw.invoke(req()).status == "Refused"
        assert len(calls) == 1


class TestRecord:
    def test_record_appends_and_replays(self, tmp_path):
        path = tmp_path / "c.jsonl"
        gw = Gateway(mode="record",
                     transport=lambda r: BackendResponse(status="Ok", body="live"),
                     cassette=Cassette(path))
        r = req()
        gw.invoke(r)
        replay = Gateway(mode="replay", cassette=Cassette(path))
        assert replay.invoke(r).body == "live"


class TestConcurrencyLimit:
    def test_max_in_flight_enforced(self):
        active = []
        peak = []
        lock = threading.Lock()

        def slow(r):
            with lock:
                active.append(1)
                peak.append(len(active))
            time.sleep(0.01)
            with lock:
                active.pop()
            return BackendResponse(status="Ok", body="x")

        gw = Gateway(mode="live", transport=slow,
                     policy=RetryPolicy(max_in_flight=2))
        threads = [threading.Thread(target=lambda i=i: gw.invoke(req(seed=i)))
                   for i in range(12)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert max(peak) <= 2
