import math

import numpy as np
import pytest

from helpers import angles_video, flat_video, pivotal_table, random_table

from trackbank import (
    Action,
    FrameSpec,
    ScriptedTable,
    ScriptedTracker,
    SimParams,
    SyntheticTracker,
    TrackingEnv,
    VideoSpec,
    bank_from_frames,
    dump_scripted_table,
    fifo_policy,
    generate_video,
    load_video,
    rollout,
    save_video,
    simulate,
)
from trackbank.errors import ConfigurationError, InvariantError, PreconditionError
from trackbank.videos import video_from_dict, video_to_dict


def test_perfect_match_scores_one():
    video = angles_video([1.2, 1.2])
    q, empty = simulate(video.frames[1], bank_from_frames([0], 2), video)
    assert q == 1.0
    assert not empty


def test_orthogonal_memories_score_zero():
    video = angles_video([0.0, math.pi / 2])
    q, empty = simulate(video.frames[1], bank_from_frames([0], 2), video)
    assert q == pytest.approx(0.0, abs=1e-12)
    assert empty  # below the similarity floor


def test_difficulty_shrinks_the_score():
    video = angles_video([0.3, 0.3], difficulty=[0.0, 0.25])
    q, _ = simulate(video.frames[1], bank_from_frames([0], 2), video)
    assert q == pytest.approx(0.75)


def test_memorized_distractor_causes_a_spurious_mask():
    theta_d = 2.0
    video = angles_video(
        [theta_d, 0.4, 0.4],
        visible=[True, True, False],
        distractors=[None, None, theta_d],
    )
    bank = bank_from_frames([0], 3)  # frame 0 sits exactly at the distractor
    q, empty = simulate(video.frames[2], bank, video)
    assert not empty
    assert q == 0.0


def test_hidden_target_without_a_match_scores_one():
    video = angles_video(
        [0.0, 0.0, 0.0],
        visible=[True, True, False],
        distractors=[None, None, math.pi],
    )
    q, empty = simulate(video.frames[2], bank_from_frames([0, 1], 3), video)
    assert empty
    assert q == 1.0


def test_hallucination_threshold_is_a_strict_cutoff():
    # distractor 60 degrees away: cos = 0.5 exactly
    video = angles_video(
        [0.0, 0.0],
        visible=[True, False],
        distractors=[None, math.pi / 3],
    )
    bank = bank_from_frames([0], 2)
    q, empty = simulate(video.frames[1], bank, video, SimParams(hallucination_threshold=0.5))
    assert not empty and q == 0.0
    q, empty = simulate(video.frames[1], bank, video, SimParams(hallucination_threshold=0.51))
    assert empty and q == 1.0


def test_added_memories_never_hurt_a_visible_frame():
    rng = np.random.default_rng(2)
    for _ in range(50):
        angles = rng.uniform(0.0, 2 * math.pi, size=8).tolist()
        video = angles_video(angles, difficulty=rng.uniform(0.0, 1.0, size=8).tolist())
        t = int(rng.integers(2, 8))
        small = bank_from_frames([0], 4)
        extra = sorted(rng.choice(np.arange(1, t), size=min(2, t - 1), replace=False))
        big = bank_from_frames([0, *map(int, extra)], 4)
        q_small, _ = simulate(video.frames[t], small, video)
        q_big, _ = simulate(video.frames[t], big, video)
        assert q_big >= q_small


def test_dangling_feature_id_is_an_error():
    video = angles_video([0.0, 0.1])
    bank = bank_from_frames([0, 5], 3)
    with pytest.raises(InvariantError):
        simulate(video.frames[1], bank, video)


def test_sim_params_are_validated():
    with pytest.raises(ConfigurationError):
        SimParams(hallucination_threshold=0.0)
    with pytest.raises(ConfigurationError):
        SimParams(hallucination_threshold=1.0)
    with pytest.raises(ConfigurationError):
        SimParams(similarity_floor=1.0)
    with pytest.raises(ConfigurationError):
        SimParams(similarity_floor=-0.1)


def test_scripted_lookup_and_missing_key():
    table = pivotal_table()
    assert table.lookup(1, (0,)) == (0.5, False)
    with pytest.raises(PreconditionError) as err:
        table.lookup(2, (0, 9))
    assert "t=2" in str(err.value)
    assert "0,9" in str(err.value)


def test_fifo_replay_follows_the_table():
    video = flat_video(4, video_id="pivot")
    env = TrackingEnv(video, ScriptedTracker(pivotal_table()), capacity=2)
    trace = rollout(env, lambda e: (fifo_policy(e.bank), None, None))
    assert [s.reward for s in trace.steps] == [0.5, 0.25, 0.2]


def test_table_round_trip_is_bit_exact(tmp_path):
    table = random_table(7, 3, np.random.default_rng(4))
    path = tmp_path / "table.tsv"
    table.save(path)
    loaded = ScriptedTable.load(path)
    assert loaded == table
    loaded.save(tmp_path / "again.tsv")
    assert (tmp_path / "again.tsv").read_bytes() == path.read_bytes()


def test_table_verify_total_spots_gaps():
    table = pivotal_table()
    del table.entries[(3, (0, 2))]
    with pytest.raises(InvariantError) as err:
        table.verify_total()
    assert "t=3" in str(err.value)


def test_table_load_verifies_totality(tmp_path):
    table = pivotal_table()
    del table.entries[(3, (0, 2))]
    path = tmp_path / "partial.tsv"
    table.save(path)
    with pytest.raises(InvariantError):
        ScriptedTable.load(path)
    assert ScriptedTable.load(path, verify=False).video_length == 4


@pytest.mark.parametrize(
    "text",
    [
        "",
        "4\n",
        "4 2\n1\t0\t0.5\n",
        "4 2\n1\t0\t0.5\tmaybe\n",
        "4 2\n1\t0\t1.5\tfalse\n",
        "4 2\n1\t0\t0.5\tfalse\n1\t0\t0.6\tfalse\n",
        "x y\n",
    ],
)
def test_table_parse_rejects_malformed_input(text):
    with pytest.raises(ConfigurationError):
        ScriptedTable.parse(text)


def test_dumped_table_replays_identically():
    video = generate_video("drift", 9, seed=1)
    tracker = SyntheticTracker(video)
    table = dump_scripted_table(tracker, video.length, capacity=3)
    table.verify_total()

    def fifo(env):
        return fifo_policy(env.bank), None, None

    direct = rollout(TrackingEnv(video, tracker, capacity=3), fifo)
    scripted = rollout(TrackingEnv(video, ScriptedTracker(table), capacity=3), fifo)
    assert [s.reward for s in direct.steps] == [s.reward for s in scripted.steps]
    assert direct.final_return == scripted.final_return
    assert [s.info for s in direct.steps] == [s.info for s in scripted.steps]


def test_generate_video_is_deterministic():
    a = generate_video("drift", 10, seed=42)
    b = generate_video("drift", 10, seed=42)
    assert a == b
    assert a.video_id == "drift-L10-s42"
    assert generate_video("drift", 10, seed=43) != a


def test_generated_videos_satisfy_the_frame_contract():
    for family in ("drift", "occlusion", "distractor"):
        video = generate_video(family, 24, seed=3)
        assert video.length == 24
        assert video.frames[0].visible
        for frame in video.frames:
            assert 0.0 <= frame.appearance < 2 * math.pi
            assert 0.0 <= frame.difficulty < 1.0


def test_occlusion_hides_the_target_for_a_stretch():
    video = generate_video("occlusion", 20, seed=0)
    hidden = [i for i, f in enumerate(video.frames) if not f.visible]
    assert hidden
    assert hidden == list(range(hidden[0], hidden[0] + len(hidden)))
    assert all(video.frames[i].distractor_appearance is None for i in hidden)


def test_distractor_windows_carry_a_distractor():
    video = generate_video("distractor", 20, seed=7)
    hidden = [f for f in video.frames if not f.visible]
    assert hidden
    assert all(f.distractor_appearance is not None for f in hidden)


def test_generate_video_rejects_bad_arguments():
    with pytest.raises(ConfigurationError):
        generate_video("drift", 1, seed=0)
    with pytest.raises(ConfigurationError):
        generate_video("zoom", 10, seed=0)


def test_video_file_round_trip(tmp_path):
    video = generate_video("distractor", 16, seed=5)
    path = tmp_path / "video.json"
    save_video(video, path)
    assert load_video(path) == video
    save_video(load_video(path), tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_video_dict_round_trip():
    video = generate_video("occlusion", 12, seed=9)
    assert video_from_dict(video_to_dict(video)) == video


def test_frame_spec_validation():
    with pytest.raises(InvariantError):
        FrameSpec(appearance=-0.1, visible=True)
    with pytest.raises(InvariantError):
        FrameSpec(appearance=0.0, visible=True, difficulty=1.0)
    with pytest.raises(InvariantError):
        VideoSpec(
            video_id="v",
            frames=(FrameSpec(0.0, False), FrameSpec(0.0, True)),
        )
