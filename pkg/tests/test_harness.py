import json
import math
import struct
from fractions import Fraction

import pytest
from pydantic import ValidationError

from src.adversary import attack_value, optimal_attack_exact, random_strategy
from src.errors import EncodingError, ScheduleError, StrategyMismatchError
from src.gf import FieldSpec, make_rng
from src.protocol import ProtocolParams, Verdict
from src.simulator import RunMode, SimulationConfig, Simulator, run
from src.spacetime import SpacetimeConfig
from src.storage import (
    read_simulation_config,
    read_strategy,
    read_transcript,
    transcript_lines,
    verify_transcript_file,
    write_simulation_config,
    write_strategy,
    write_transcript,
)
from src.wire import HEADER, AgentId, Frame, FrameKind

SPACETIME = SpacetimeConfig(distance_m=1e5, signal_speed_mps=299_792_458.0)


def honest_config(q: int = 256, k: int = 6, **overrides) -> SimulationConfig:
    params = ProtocolParams(field=FieldSpec.from_order(q), rounds=k, strict_paper_mode=False)
    return SimulationConfig(params=params, spacetime=SPACETIME, seed=42, **overrides)


def attack_config(trials: int) -> SimulationConfig:
    params = ProtocolParams(field=FieldSpec.from_order(2), rounds=1, strict_paper_mode=False)
    _, witness = optimal_attack_exact(params)
    return SimulationConfig(
        params=params, spacetime=SPACETIME, seed=7, mode=RunMode.ATTACK, strategy=witness, trials=trials
    )


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------

def test_frame_layout(gf256):
    frame = Frame.carrying(FrameKind.RESPONSE, AgentId.A2, 7, 1.25, gf256.element(0xD4))
    data = frame.encode()
    assert HEADER.size == 16
    assert len(data) == 17
    assert data[0] == FrameKind.RESPONSE and data[1] == AgentId.A2
    assert data[2:6] == (7).to_bytes(4, "big")
    assert struct.unpack(">d", data[6:14])[0] == 1.25
    assert data[14:16] == b"\x00\x01"
    assert data[16] == 0xD4
    assert Frame.decode(data) == frame
    assert frame.element(gf256) == gf256.element(0xD4)


def test_frame_decoding_errors(gf256):
    data = Frame.carrying(FrameKind.CHALLENGE, AgentId.B1, 1, 0.0, gf256.element(3)).encode()
    with pytest.raises(EncodingError):
        Frame.decode(data[:5])
    with pytest.raises(EncodingError):
        Frame.decode(data[:-1])
    with pytest.raises(EncodingError):
        Frame.decode(bytes([9]) + data[1:])
    with pytest.raises(EncodingError):
        Frame.decode(data).element(FieldSpec.preset(2, 16))


def test_agent_locations():
    assert [a.location for a in AgentId] == [1, 2, 1, 2]
    assert AgentId.A2.is_alice and not AgentId.B2.is_alice


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def test_honest_run_accepts_with_valid_timing():
    result = run(honest_config())
    assert result.verdict == Verdict.ACCEPT
    assert result.valid
    assert result.transcript.sealed and result.transcript.is_complete
    summary = result.summary()
    assert summary["verdict"] == "accept" and summary["violations"] == []


@pytest.mark.parametrize("q,k", [(2, 1), (3, 2), (4, 5), (2**32, 4)])
def test_honest_runs_accept_on_other_fields(q, k):
    for bit in (0, 1):
        assert run(honest_config(q, k, bit=bit)).verdict == Verdict.ACCEPT


def test_verification_waits_for_the_far_answers():
    result = run(honest_config(k=4))
    transcript = result.transcript
    far = [r for r in transcript.records if r.location == 2]
    for record in far:
        assert record.available_at == pytest.approx(record.emit_time + SPACETIME.light_time_s)
    assert transcript.verified_at >= max(r.available_at for r in transcript.records)


def test_runs_are_deterministic():
    first, second = run(honest_config()), run(honest_config())
    assert transcript_lines(first.transcript) == transcript_lines(second.transcript)
    other = run(honest_config().model_copy(update={"seed": 43}))
    assert transcript_lines(other.transcript) != transcript_lines(first.transcript)


def test_delayed_response_is_reported():
    config = honest_config(mode=RunMode.TIMING_AUDIT, injections={3: 2 * SPACETIME.light_time_s})
    result = run(config)
    assert [v.round for v in result.violations] == [3]
    assert not result.valid


def test_injection_on_the_light_cone_boundary():
    # period 0.5 s on a one light-second baseline: a 0.5 s delay lands exactly on the deadline
    spacetime = SpacetimeConfig(distance_m=299_792_458.0, signal_speed_mps=299_792_458.0)
    config = honest_config(k=4, mode=RunMode.TIMING_AUDIT, injections={3: 0.5}, safety_factor=0.5)
    result = run(config.model_copy(update={"spacetime": spacetime}))
    assert [v.round for v in result.violations] == [3]
    shorter = config.model_copy(update={"spacetime": spacetime, "injections": {3: 0.25}})
    assert run(shorter).valid


def test_configs_are_validated():
    with pytest.raises(ValidationError):
        honest_config(mode=RunMode.ATTACK)
    with pytest.raises(ValidationError):
        honest_config(injections={3: 0.001})
    with pytest.raises(ValidationError):
        honest_config(mode=RunMode.TIMING_AUDIT, injections={7: 0.001})


def test_locations_only_share_frames_over_the_channel():
    deliveries = []
    run(honest_config(), observer=lambda time, dest, frame: deliveries.append((time, dest, frame)))
    frames = [(time, dest, frame) for time, dest, frame in deliveries if frame is not None]
    assert frames
    for time, dest, frame in frames:
        if frame.sender.location != dest.location:
            assert time == pytest.approx(frame.stamp + SPACETIME.light_time_s)
    # each Alice hears only from the Bob at the same location
    assert {frame.sender for _, dest, frame in frames if dest == AgentId.A2} == {AgentId.B2}
    assert {frame.sender for _, dest, frame in frames if dest == AgentId.A1} == {AgentId.B1}


def test_cheating_alices_only_learn_far_challenges_late():
    deliveries = []
    run(attack_config(20), observer=lambda time, dest, frame: deliveries.append((time, dest, frame)))
    relays = [(time, frame) for time, dest, frame in deliveries if frame is not None and frame.kind == FrameKind.RELAY and dest.is_alice]
    assert relays
    for time, frame in relays:
        assert time >= frame.stamp + SPACETIME.light_time_s


def test_simulator_rejects_stamps_going_backwards(gf2):
    sim = Simulator(SPACETIME, agents={})
    sim.send(AgentId.B2, Frame.carrying(FrameKind.RESPONSE, AgentId.A2, 2, 1.0, gf2.one()))
    with pytest.raises(ScheduleError):
        sim.send(AgentId.B2, Frame.carrying(FrameKind.RESPONSE, AgentId.A2, 4, 0.5, gf2.one()))


def high_latency_attack(processing_time_s: float, k: int) -> SimulationConfig:
    spacetime = SpacetimeConfig(distance_m=3e8, signal_speed_mps=3e8, processing_time_s=processing_time_s)
    params = ProtocolParams(field=FieldSpec.from_order(2), rounds=k, strict_paper_mode=False)
    strategy = random_strategy(params.field, k, make_rng(11))
    return SimulationConfig(
        params=params, spacetime=spacetime, seed=4, mode=RunMode.ATTACK, strategy=strategy, trials=5
    )


def test_cheating_reveal_waits_for_the_relayed_challenge():
    # b_2 reaches A1 only after the reveal timer has fired
    result = run(high_latency_attack(0.5, 3))
    transcript = result.transcript
    second = transcript.records[1]
    assert transcript.reveal_time >= second.challenge_time + 1.0
    assert result.valid
    assert result.attack.trials == 5


def test_answers_waiting_on_relays_are_timing_violations():
    result = run(high_latency_attack(0.8, 4))
    assert [(v.round, v.kind) for v in result.violations] == [(4, "light_cone"), (5, "reveal")]
    assert not result.valid
    assert result.transcript.verdict in (Verdict.ACCEPT, Verdict.REJECT)


def test_deliveries_travel_encoded(monkeypatch):
    sizes = []
    encode = Frame.encode

    def recording(frame):
        data = encode(frame)
        sizes.append(len(data))
        return data

    monkeypatch.setattr(Frame, "encode", recording)
    run(honest_config(k=4))
    # 4 challenges, 4 responses, 2 relayed answers, 2 reveal frames
    assert len(sizes) == 12
    assert set(sizes) == {HEADER.size + 1}


def test_stamps_are_ordered_per_channel(gf2):
    sim = Simulator(SPACETIME, agents={})
    sim.send(AgentId.B2, Frame.carrying(FrameKind.RESPONSE, AgentId.A2, 2, 1.0, gf2.one()))
    sim.send(AgentId.A1, Frame.carrying(FrameKind.RELAY, AgentId.A2, 4, 0.5, gf2.one()))
    with pytest.raises(ScheduleError):
        sim.send(AgentId.A1, Frame.carrying(FrameKind.RELAY, AgentId.A2, 6, 0.25, gf2.one()))


def test_hiding_audit_mode():
    result = run(honest_config(q=3, k=2, mode=RunMode.HIDING_AUDIT))
    assert result.hiding.holds
    assert result.verdict == Verdict.ACCEPT


def test_attack_replay_matches_the_exact_rate():
    result = run(attack_config(2_000))
    stats = result.attack
    assert stats.expected == Fraction(3, 4)
    assert abs(stats.rate - 0.75) <= 5 * math.sqrt(0.75 * 0.25 / 2_000)
    assert result.valid


@pytest.mark.slow
def test_attack_replay_within_three_sigma():
    stats = run(attack_config(100_000)).attack
    assert stats.within_3_sigma


def test_attack_strategy_must_fit_the_run():
    config = attack_config(1)
    params = ProtocolParams(field=FieldSpec.from_order(2), rounds=2, strict_paper_mode=False)
    with pytest.raises(StrategyMismatchError):
        run(config.model_copy(update={"params": params}))


def test_random_cheaters_run_multi_round(gf3):
    params = ProtocolParams(field=gf3, rounds=4, strict_paper_mode=False)
    strategy = random_strategy(gf3, 4, make_rng(3))
    config = SimulationConfig(
        params=params, spacetime=SPACETIME, seed=5, mode=RunMode.ATTACK, strategy=strategy, trials=300
    )
    result = run(config)
    assert result.valid
    assert result.attack.expected == attack_value(strategy, params).success_rate


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def test_transcript_file_round_trip(tmp_path):
    config = honest_config()
    result = run(config)
    path = write_transcript(tmp_path / "run.jsonl", result.transcript, config.spacetime, config.seed)

    loaded = read_transcript(path)
    assert loaded.transcript.records == result.transcript.records
    assert loaded.seed == 42 and loaded.spacetime == config.spacetime
    assert loaded.stored_verdict == Verdict.ACCEPT

    report = verify_transcript_file(path)
    assert report.verdict == result.verdict
    assert report.failing_round is None and report.violations == []


def test_tampered_transcript_names_the_round(tmp_path):
    config = honest_config()
    path = write_transcript(tmp_path / "run.jsonl", run(config).transcript, config.spacetime, config.seed)
    lines = path.read_text(encoding="utf-8").splitlines()
    body = json.loads(lines[2])
    assert body["index"] == 2
    challenge = body["challenge_hex"]
    body["challenge_hex"] = format(int(challenge[:2], 16) ^ 0x01, "02x") + challenge[2:]
    lines[2] = json.dumps(body, sort_keys=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    report = verify_transcript_file(path)
    assert report.verdict == Verdict.REJECT
    assert report.failing_round == 2


def test_wrong_reveal_is_rejected_on_reverification(tmp_path, gf256):
    config = honest_config()
    transcript = run(config).transcript
    transcript.revealed_ak = transcript.revealed_ak + gf256.one()
    path = write_transcript(tmp_path / "bad.jsonl", transcript, config.spacetime, config.seed)
    report = verify_transcript_file(path)
    assert report.verdict == Verdict.REJECT
    assert report.reason


def test_strategy_file_round_trip(tmp_path):
    params = ProtocolParams(field=FieldSpec.from_order(3), rounds=1, strict_paper_mode=False)
    result, witness = optimal_attack_exact(params)
    path = write_strategy(tmp_path / "witness.json", witness)
    loaded = read_strategy(path)
    assert loaded == witness
    assert attack_value(loaded, params).epsilon == result.epsilon

    gf5 = FieldSpec.from_order(5)
    multi = random_strategy(gf5, 3, make_rng(8))
    assert read_strategy(write_strategy(tmp_path / "multi.json", multi)) == multi


def test_simulation_config_file_round_trip(tmp_path):
    config = attack_config(50)
    write_strategy(tmp_path / "witness.json", config.strategy)
    path = write_simulation_config(tmp_path / "replay.ini", config, "witness.json")
    loaded = read_simulation_config(path)
    assert loaded.params == config.params
    assert loaded.spacetime == config.spacetime
    assert loaded.strategy == config.strategy
    assert (loaded.mode, loaded.seed, loaded.trials, loaded.bit) == (RunMode.ATTACK, 7, 50, 0)


def test_injections_in_light_times(tmp_path):
    path = tmp_path / "audit.ini"
    path.write_text(
        "[field]\norder = 2^8\n\n[protocol]\nrounds = 6\n\n"
        "[spacetime]\ndistance_m = 100000\n\n"
        "[run]\nseed = 1\nmode = timing-audit\ninjections = 3:2x, 5:0\n",
        encoding="utf-8",
    )
    config = read_simulation_config(path)
    assert config.injections == {3: pytest.approx(2 * config.spacetime.light_time_s), 5: 0.0}
    assert [v.round for v in run(config).violations] == [3]
