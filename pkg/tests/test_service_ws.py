import pytest

from guidekit.errors import ProtocolError
from guidekit.package import compile_fsm
from guidekit.service import ServiceConfig
from guidekit.service.protocol import (
    audit_transcript,
    check_message,
    make_message,
    parse_message,
)
from guidekit.trace import box_to_json

from service_utils import GuidanceClient, run_server


class TestProtocolMessages:
    def test_make_and_check(self):
        message = make_message("hello", "s", 0, {"a": 1})
        assert check_message(message) == message

    def test_rejects_unknown_type(self):
        with pytest.raises(ProtocolError):
            check_message({"type": "ping", "session_id": "s", "sequence": 0, "payload": {}})

    def test_rejects_bool_sequence(self):
        with pytest.raises(ProtocolError):
            check_message(
                {"type": "hello", "session_id": "s", "sequence": True, "payload": {}}
            )

    def test_rejects_negative_sequence(self):
        with pytest.raises(ProtocolError):
            check_message(
                {"type": "hello", "session_id": "s", "sequence": -1, "payload": {}}
            )

    def test_rejects_non_dict_payload(self):
        with pytest.raises(ProtocolError):
            check_message(
                {"type": "hello", "session_id": "s", "sequence": 0, "payload": []}
            )

    def test_parse_rejects_garbage(self):
        with pytest.raises(ProtocolError):
            parse_message("not json")


class TestAuditTranscript:
    def _sent(self, sequence):
        return ("sent", make_message("detections", "s", sequence, {"boxes": []}))

    def _guidance(self, sequence):
        return (
            "received",
            make_message("guidance", "s", sequence, {"for_sequence": sequence}),
        )

    def _rejection(self, sequence):
        return (
            "received",
            make_message(
                "error",
                "s",
                sequence,
                {"code": "flow_control", "for_sequence": sequence},
            ),
        )

    def test_serial_traffic_peaks_at_one(self):
        transcript = [self._sent(1), self._guidance(1), self._sent(2), self._guidance(2)]
        assert audit_transcript(transcript, 2) == 1

    def test_pipelined_traffic_counts(self):
        transcript = [
            self._sent(1),
            self._sent(2),
            self._guidance(1),
            self._guidance(2),
        ]
        assert audit_transcript(transcript, 2) == 2

    def test_over_budget_raises(self):
        transcript = [self._sent(1), self._sent(2), self._sent(3)]
        with pytest.raises(ProtocolError):
            audit_transcript(transcript, 2)

    def test_rejected_frames_hold_no_token(self):
        transcript = [
            self._sent(1),
            self._sent(2),
            self._sent(3),
            self._rejection(3),
            self._guidance(1),
            self._guidance(2),
        ]
        assert audit_transcript(transcript, 2) == 2


@pytest.fixture(scope="module")
def sandwich_package():
    from guidekit.demo import sandwich_fsm

    return compile_fsm(sandwich_fsm())


@pytest.fixture(scope="module")
def live_server(sandwich_package):
    config = ServiceConfig()
    with run_server(config) as addr:
        import httpx

        httpx.post(f"http://{addr}/packages", json=sandwich_package).raise_for_status()
        yield addr


def frames_json(timeline):
    return [[box_to_json(b) for b in boxes] for boxes in timeline]


class TestHandshake:
    def test_hello_ack(self, live_server):
        with GuidanceClient(live_server) as client:
            ack = client.hello("sandwich")
            assert ack["type"] == "ack"
            payload = ack["payload"]
            assert payload["for_sequence"] == 0
            assert payload["protocol_version"] == 1
            assert payload["task_name"] == "sandwich"
            assert payload["tokens"] == 2
            assert payload["state"] == "start"
            assert "bread" in payload["guidance"].lower()

    def test_wrong_version_rejected(self, live_server):
        with GuidanceClient(live_server) as client:
            response = client.hello("sandwich", protocol_version=9)
            assert response["type"] == "error"
            assert response["payload"]["code"] == "version"

    def test_unknown_task_rejected(self, live_server):
        with GuidanceClient(live_server) as client:
            response = client.hello("lasagna")
            assert response["type"] == "error"
            assert response["payload"]["code"] == "unknown_task"

    def test_double_hello_rejected(self, live_server):
        with GuidanceClient(live_server) as client:
            client.hello("sandwich")
            response = client.hello("sandwich")
            assert response["payload"]["code"] == "already_started"

    def test_frames_before_hello_rejected(self, live_server):
        with GuidanceClient(live_server) as client:
            client.detections([])
            response = client.recv()
            assert response["payload"]["code"] == "not_ready"

    def test_frame_without_detector_rejected(self, live_server):
        with GuidanceClient(live_server) as client:
            client.hello("sandwich")
            client.send("frame", {"image_b64": "aGk="})
            response = client.recv()
            assert response["payload"]["code"] == "no_detector"


class TestSequencing:
    def test_sequence_must_increase(self, live_server):
        with GuidanceClient(live_server) as client:
            client.hello("sandwich")
            client.send("detections", {"boxes": []}, sequence=0)
            response = client.recv()
            assert response["payload"]["code"] == "sequence"

    def test_wrong_session_id_rejected(self, live_server):
        with GuidanceClient(live_server) as client:
            client.hello("sandwich")
            client.send("detections", {"boxes": []}, session_id="intruder")
            response = client.recv()
            assert response["payload"]["code"] == "bad_message"

    def test_server_message_type_from_client_rejected(self, live_server):
        with GuidanceClient(live_server) as client:
            client.hello("sandwich")
            client.send("guidance", {})
            response = client.recv()
            assert response["payload"]["code"] == "bad_message"

    def test_garbage_text_answered_with_error(self, live_server):
        with GuidanceClient(live_server) as client:
            client.hello("sandwich")
            client.send_raw("{broken")
            response = client.recv()
            assert response["type"] == "error"

    def test_server_sequences_increase(self, live_server, timelines):
        with GuidanceClient(live_server) as client:
            client.hello("sandwich")
            for boxes in frames_json(timelines["normal"][:6]):
                client.guide(boxes)
            received = [r for d, r in client.transcript if d == "received"]
            sequences = [r["sequence"] for r in received]
            assert sequences == sorted(sequences)
            assert len(set(sequences)) == len(sequences)


class TestGuidedRun:
    def test_normal_timeline_reaches_done(self, live_server, timelines):
        with GuidanceClient(live_server) as client:
            client.hello("sandwich")
            last = None
            changes = []
            for boxes in frames_json(timelines["normal"]):
                last = client.guide(boxes)
                if last["changed"]:
                    changes.append(last["state"])
            assert last["done"] is True
            assert changes == ["bread-placed", "ham-on-bread", "lettuce-on-ham", "done"]
            audit_transcript(client.transcript, 2)

    def test_sessions_are_independent(self, live_server, timelines):
        normal = frames_json(timelines["normal"])
        with GuidanceClient(live_server, "session-a") as a, GuidanceClient(
            live_server, "session-b"
        ) as b:
            a.hello("sandwich")
            b.hello("sandwich")
            # a walks the whole task; b keeps showing an empty table
            state_b = None
            for boxes in normal:
                payload_a = a.guide(boxes)
                state_b = b.guide([])
            assert payload_a["done"] is True
            assert state_b["state"] == "start"
            assert state_b["done"] is False


class TestFlowControl:
    @pytest.fixture()
    def slow_server(self, sandwich_package):
        config = ServiceConfig(frame_delay=0.25)
        with run_server(config) as addr:
            import httpx

            httpx.post(f"http://{addr}/packages", json=sandwich_package).raise_for_status()
            yield addr

    def test_burst_beyond_budget_dropped(self, slow_server):
        with GuidanceClient(slow_server) as client:
            client.hello("sandwich")
            sent = [client.detections([]) for _ in range(4)]
            outcomes = {}
            for _ in range(4):
                record = client.recv()
                payload = record["payload"]
                outcomes[payload["for_sequence"]] = (record["type"], payload.get("code"))
            # first two occupy the token budget and eventually answer;
            # the rest of the burst is refused immediately
            assert outcomes[sent[0]][0] == "guidance"
            assert outcomes[sent[1]][0] == "guidance"
            assert outcomes[sent[2]] == ("error", "flow_control")
            assert outcomes[sent[3]] == ("error", "flow_control")
            audit_transcript(client.transcript, 2)

    def test_tokens_return_after_replies(self, slow_server):
        with GuidanceClient(slow_server) as client:
            client.hello("sandwich")
            for _ in range(4):
                client.detections([])
            for _ in range(4):
                client.recv()
            payload = client.guide([])  # budget is free again
            assert payload["state"] == "start"
            assert audit_transcript(client.transcript, 2) <= 2

    def test_configured_token_budget_reported(self, sandwich_package):
        config = ServiceConfig(max_tokens=5)
        with run_server(config) as addr:
            import httpx

            httpx.post(f"http://{addr}/packages", json=sandwich_package).raise_for_status()
            with GuidanceClient(addr) as client:
                ack = client.hello("sandwich")
                assert ack["payload"]["tokens"] == 5
