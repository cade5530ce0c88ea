"""Tests for the wire format, site agents and the remote coordinator."""

import socket

import numpy as np
import pytest

from sdnum import app
from sdnum.errors import DecodeError, ProtocolError, TransportError, VersionError
from sdnum.market import LogOracle, OracleSite
from sdnum.protocol import (
    RemoteSite,
    SiteAgent,
    WireMessage,
    coordinate,
    decode,
    decode_stream,
    encode,
    parse_endpoint,
    parse_sites,
    price_message,
    window_advance_message,
)

RECORD = b'{"k":3,"kind":"price","payload":{"price":[0.7]},"site":"loc1","v":1,"window":0}\n'


class TestWire:
    def test_encoding_is_canonical(self):
        assert encode(price_message(3, 0, "loc1", [0.7])) == RECORD

    def test_decode(self):
        msg = decode(RECORD)
        assert msg.key == ("price", 3, 0, "loc1")
        assert msg.payload == {"price": [0.7]}
        assert encode(msg) == RECORD

    def test_truncated_record(self):
        with pytest.raises(DecodeError) as info:
            decode(b'{"k":1')
        assert info.value.offset == 6
        with pytest.raises(DecodeError) as info:
            decode(b'{"k":1', offset=10)
        assert info.value.offset == 16
        assert "byte offset 16" in str(info.value)

    def test_malformed_json_offset(self):
        with pytest.raises(DecodeError) as info:
            decode(b'{"k":}\n')
        assert info.value.offset == 5

    @pytest.mark.parametrize(
        "record",
        [
            b'{"k":0,"kind":"price","payload":{},"site":"a","v":2,"window":0}\n',
            b'{"k":0,"kind":"bid","payload":{},"site":"a","v":1,"window":0}\n',
        ],
    )
    def test_version_and_kind(self, record):
        with pytest.raises(VersionError):
            decode(record)

    @pytest.mark.parametrize(
        "record",
        [
            b'[1, 2]\n',
            b'{"k":0,"kind":"price","site":"a","v":1,"window":0}\n',
            b'{"k":0,"kind":"price","payload":[],"site":"a","v":1,"window":0}\n',
            b'{"k":"x","kind":"price","payload":{},"site":"a","v":1,"window":0}\n',
            b'\xff\n',
        ],
    )
    def test_malformed_records(self, record):
        with pytest.raises(DecodeError):
            decode(record)

    def test_encode_checks_payload(self):
        with pytest.raises(DecodeError):
            encode(WireMessage("price", payload={"price": [1.0], "states": [0, 1]}))
        with pytest.raises(VersionError):
            encode(WireMessage("bid"))

    def test_stream_offsets(self):
        data = RECORD + RECORD
        assert [m.k for m in decode_stream(data)] == [3, 3]
        with pytest.raises(DecodeError) as info:
            decode_stream(RECORD + b'{"k":}\n')
        assert info.value.offset == len(RECORD) + 5


class TestAgent:
    def test_price_before_first_window(self):
        agent = SiteAgent(OracleSite("a", LogOracle([1.0])))
        with pytest.raises(ProtocolError):
            agent.handle(price_message(0, 0, "a", [0.5]))

    def test_repeats_get_cached_reply(self):
        agent = SiteAgent(OracleSite("a", LogOracle([1.0])))
        report = agent.handle(window_advance_message(0, "a", [1.0]))
        assert report.kind == "fbar_report"
        assert report.payload["model"] == {"kind": "log", "c": [1.0]}
        first = agent.handle(price_message(0, 0, "a", [0.5]))
        assert first.payload["demand"] == [1.0]
        assert agent.handle(price_message(0, 0, "a", [0.5])) is first

    def test_window_advance_plays_out_allocation(self):
        agent = SiteAgent(OracleSite("a", LogOracle([1.0])))
        agent.handle(window_advance_message(0, "a", [1.0]))
        report = agent.handle(window_advance_message(1, "a", [1.0], [1.0], epochs=3))
        assert report.payload["realized"] == pytest.approx(3 * np.log(2.0))
        assert agent.window == 1

    def test_reports_carry_no_ground_state(self, make_config):
        config = make_config("pandemic")
        agent = SiteAgent(app.build_runtime(config, 0))
        agent.handle(window_advance_message(0, "loc1", [2.0]))
        data = encode(agent.handle(window_advance_message(1, "loc1", [2.0], [1.0], epochs=1)))
        assert b'"states"' not in data
        assert b'"edges"' not in data
        assert set(decode(data).payload) == {"model", "realized", "summary", "stale", "error"}

    def test_restart_from_checkpoint(self, make_config, tmp_path):
        config = make_config("pandemic")
        state_dir = tmp_path / "state"
        agent = SiteAgent(app.build_runtime(config, 0), state_dir=state_dir)
        agent.handle(window_advance_message(0, "loc1", [2.0]))
        request = window_advance_message(1, "loc1", [2.0], [1.0], epochs=1)
        reply = agent.handle(request)
        assert (state_dir / "loc1.json").exists()

        restarted = SiteAgent(app.build_runtime(config, 0), state_dir=state_dir)
        assert restarted.window == 1
        assert restarted.runtime.snapshot() == agent.runtime.snapshot()
        # the resent request is answered from the checkpoint, not replayed
        assert encode(restarted.handle(request)) == encode(reply)
        assert restarted.runtime.snapshot() == agent.runtime.snapshot()

    def test_survives_garbage_on_the_wire(self):
        with SiteAgent(OracleSite("a", LogOracle([1.0]))) as agent:
            with socket.create_connection(agent.address, timeout=5) as sock:
                sock.sendall(b"not json\n" + encode(window_advance_message(0, "a", [1.0])))
                line = sock.makefile("rb").readline()
        assert decode(line).kind == "fbar_report"


class TestRemote:
    def test_unreachable_site(self, free_port):
        site = RemoteSite(("127.0.0.1", free_port), "x", retry_count=1, retry_delay=0, timeout=1)
        with pytest.raises(TransportError):
            site.refresh(0, [1.0])

    def test_parse_sites(self):
        assert parse_sites("a=127.0.0.1:7001, b=:7002") == [
            ("a", ("127.0.0.1", 7001)),
            ("b", ("127.0.0.1", 7002)),
        ]
        assert parse_sites("host:9") == [("host:9", ("host", 9))]
        with pytest.raises(ValueError):
            parse_sites(" , ")

    def test_parse_endpoint(self):
        assert parse_endpoint(":7000") == ("127.0.0.1", 7000)
        with pytest.raises(ValueError):
            parse_endpoint("localhost")

    @pytest.mark.parametrize("mode", ["synthetic", "pandemic"])
    def test_remote_run_matches_local_run(self, make_config, mode):
        config = make_config(mode)
        h = config.horizon
        integer = mode != "synthetic"
        local = app._controller(
            config, [app.build_runtime(config, i) for i in range(len(config.sites))], False
        )
        local.run(h.windows)

        agents = [
            SiteAgent(app.build_runtime(config, i)).start() for i in range(len(config.sites))
        ]
        try:
            remote = coordinate(
                [(a.name, a.address) for a in agents],
                h.z,
                T=h.T,
                tau=h.tau,
                gamma=h.gamma,
                windows=h.windows,
                retry_delay=0.0,
                timeout=10.0,
                shutdown=False,
                integer=integer,
            )
        finally:
            for a in agents:
                a.stop()

        assert_same_history(local, remote)

    def test_agent_restart_between_windows(self, make_config, tmp_path):
        config = make_config("pandemic")
        h = config.horizon
        local = app._controller(
            config, [app.build_runtime(config, i) for i in range(len(config.sites))], False
        )
        local.run(h.windows)

        state_dir = tmp_path / "state"
        agents = [
            SiteAgent(app.build_runtime(config, i), state_dir=state_dir).start()
            for i in range(len(config.sites))
        ]
        remotes = [
            RemoteSite(a.address, a.name, retry_count=5, retry_delay=0.05, timeout=10.0)
            for a in agents
        ]
        remote = app._controller(config, remotes, True)
        try:
            remote.run(1)
            address = agents[0].address
            agents[0].stop()
            agents[0] = SiteAgent(
                app.build_runtime(config, 0), listen=address, state_dir=state_dir
            ).start()
            remote.run(h.windows - 1)
        finally:
            for r in remotes:
                r.close()
            for a in agents:
                a.stop()
        assert_same_history(local, remote)


def assert_same_history(local, remote):
    assert len(remote.history) == len(local.history)
    for mine, theirs in zip(local.history, remote.history):
        assert np.array_equal(mine.market.price, theirs.market.price)
        for name, alloc in mine.plan.allocations.items():
            assert np.array_equal(alloc, theirs.plan.allocations[name])
        assert [o.realized for o in mine.outcomes] == [o.realized for o in theirs.outcomes]
