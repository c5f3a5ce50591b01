"""Scenario templates: validation, determinism, scripted safety, round trips."""

import numpy as np
import pytest

from interplan.errors import ConfigError, ContractViolation, SceneFormatError
from interplan.geometry import oriented_box_overlap, trajectories_collide
from interplan.scenario import (
    TEMPLATE_KINDS,
    Actor,
    Scene,
    ScenarioTemplate,
    generate,
    load,
    save,
    scene_from_dict,
    scene_to_dict,
)
from interplan.serialize import load_json, write_json
from interplan.types import Footprint, KinematicState, OrientedBox, TimeGrid
from util import const_traj, hand_scene

CONFLICT_TEMPLATES = [k for k in TEMPLATE_KINDS if k != "lane_follow"]


class TestTemplateValidation:
    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            ScenarioTemplate(kind="roundabout").validate()

    def test_actor_range(self):
        with pytest.raises(ConfigError):
            ScenarioTemplate(kind="lane_follow", num_actors=(3, 2)).validate()
        with pytest.raises(ConfigError):
            ScenarioTemplate(kind="cut_in", num_actors=(1, 4)).validate()  # needs 2+
        with pytest.raises(ConfigError):
            ScenarioTemplate(kind="lane_follow", num_actors=(1.5, 4)).validate()

    def test_speed_and_noise_ranges(self):
        with pytest.raises(ConfigError):
            ScenarioTemplate(kind="lane_follow", speed_range=(-1.0, 5.0)).validate()
        with pytest.raises(ConfigError):
            ScenarioTemplate(kind="lane_follow", accel_noise=2.0).validate()
        with pytest.raises(ConfigError):
            ScenarioTemplate(kind="lane_follow", lateral_jitter=1.0).validate()


class TestGenerate:
    @pytest.mark.parametrize("kind", TEMPLATE_KINDS)
    def test_each_template_generates_valid_scenes(self, kind):
        lo = 2 if kind != "lane_follow" else 1
        tmpl = ScenarioTemplate(kind=kind, num_actors=(lo, 5))
        scenes = generate(tmpl, 4, seed=123)
        assert len(scenes) == 4
        for sc in scenes:
            sc.validate()
            assert sc.template == kind
            assert lo <= len(sc.actors) <= 5
            assert sc.expert is not None

    @pytest.mark.parametrize("kind", TEMPLATE_KINDS)
    def test_scripted_futures_are_safe(self, kind):
        """Expert vs actor gt and actor gt vs actor gt never collide."""
        lo = 2 if kind != "lane_follow" else 1
        scenes = generate(ScenarioTemplate(kind=kind, num_actors=(lo, 6)), 5, seed=77)
        for sc in scenes:
            futures = [(sc.expert, sc.ego_footprint)] + [(a.gt_future, a.footprint) for a in sc.actors]
            for i in range(len(futures)):
                for j in range(i + 1, len(futures)):
                    ti, fi = futures[i]
                    tj, fj = futures[j]
                    assert not trajectories_collide(ti, fi, tj, fj)

    @pytest.mark.parametrize("kind", TEMPLATE_KINDS)
    def test_no_initial_overlaps(self, kind):
        lo = 2 if kind != "lane_follow" else 1
        scenes = generate(ScenarioTemplate(kind=kind, num_actors=(lo, 6)), 3, seed=99)
        for sc in scenes:
            boxes = [OrientedBox(sc.ego_state.x, sc.ego_state.y, sc.ego_state.heading, sc.ego_footprint)]
            boxes += [OrientedBox(a.state.x, a.state.y, a.state.heading, a.footprint) for a in sc.actors]
            for i in range(len(boxes)):
                for j in range(i + 1, len(boxes)):
                    assert not oriented_box_overlap(boxes[i], boxes[j])

    def test_deterministic(self):
        tmpl = ScenarioTemplate(kind="merge", num_actors=(2, 5))
        a = generate(tmpl, 3, seed=5)
        b = generate(tmpl, 3, seed=5)
        c = generate(tmpl, 3, seed=6)
        assert [scene_to_dict(s) for s in a] == [scene_to_dict(s) for s in b]
        assert [scene_to_dict(s) for s in a] != [scene_to_dict(s) for s in c]

    def test_count_validated(self):
        with pytest.raises(ConfigError):
            generate(ScenarioTemplate(kind="lane_follow"), 0, seed=1)

    def test_scene_ids_are_unique(self):
        scenes = generate(ScenarioTemplate(kind="lane_follow"), 5, seed=3)
        assert len({s.scene_id for s in scenes}) == 5


class TestSceneValidation:
    def test_route_must_reference_known_lane(self, grid):
        sc = hand_scene()
        bad = Scene(**{**sc.__dict__, "route": ["nope"]})
        with pytest.raises(ContractViolation):
            bad.validate()

    def test_gt_future_grid_checked(self, grid):
        sc = hand_scene()
        off_grid = const_traj(sc.actors[0].state, TimeGrid(horizon_s=2.0, num_waypoints=5))
        bad_actor = Actor(state=sc.actors[0].state, footprint=sc.actors[0].footprint, gt_future=off_grid)
        bad = Scene(**{**sc.__dict__, "actors": [bad_actor]})
        with pytest.raises(ContractViolation):
            bad.validate()

    def test_gt_future_must_start_at_state(self, grid):
        sc = hand_scene()
        wrong_start = const_traj(KinematicState(41.0, 0.0, 0.0, 8.0), grid)
        bad_actor = Actor(state=sc.actors[0].state, footprint=sc.actors[0].footprint, gt_future=wrong_start)
        bad = Scene(**{**sc.__dict__, "actors": [bad_actor]})
        with pytest.raises(ContractViolation):
            bad.validate()

    def test_initial_ego_overlap_rejected(self, grid):
        sc = hand_scene(actor_states=[KinematicState(2.0, 0.0, 0.0, 8.0)])
        with pytest.raises(ContractViolation):
            sc.validate()


class TestSerialization:
    def test_save_load_round_trip(self, tmp_path):
        scenes = generate(ScenarioTemplate(kind="cut_in", num_actors=(2, 4)), 3, seed=8)
        path = tmp_path / "scenes.json"
        save(scenes, path)
        back = load(path)
        assert [scene_to_dict(s) for s in back] == [scene_to_dict(s) for s in scenes]
        # saving the loaded scenes is byte-identical
        path2 = tmp_path / "again.json"
        save(back, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_dict_round_trip_preserves_grid(self):
        grid = TimeGrid(horizon_s=2.0, num_waypoints=5)
        scenes = generate(ScenarioTemplate(kind="lane_follow"), 1, seed=4, grid=grid)
        back = scene_from_dict(scene_to_dict(scenes[0]), grid)
        assert scene_to_dict(back) == scene_to_dict(scenes[0])

    def test_bad_format_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        write_json(path, {"format": "not-scenes", "version": 1, "scenes": []})
        with pytest.raises(SceneFormatError):
            load(path)

    def test_bad_version_rejected(self, tmp_path):
        scenes = generate(ScenarioTemplate(kind="lane_follow"), 1, seed=4)
        path = tmp_path / "scenes.json"
        save(scenes, path)
        doc = load_json(path)
        doc["version"] = 999
        write_json(path, doc)
        with pytest.raises(SceneFormatError):
            load(path)


class TestTemplateStructure:
    def test_lane_follow_spreads_actors(self):
        """Following distances leave room to brake: no same-lane pair closer
        than a couple of seconds of headway."""
        scenes = generate(ScenarioTemplate(kind="lane_follow", num_actors=(6, 10)), 3, seed=15)
        for sc in scenes:
            ys = np.array([a.state.y for a in sc.actors] + [sc.ego_state.y])
            xs = np.array([a.state.x for a in sc.actors] + [sc.ego_state.x])
            for lane_y in np.unique(np.round(ys, 3)):
                in_lane = np.sort(xs[np.isclose(ys, lane_y, atol=0.5)])
                if len(in_lane) > 1:
                    assert np.diff(in_lane).min() > 20.0

    def test_conflict_templates_have_distinct_road_layouts(self):
        kinds = set()
        for kind in CONFLICT_TEMPLATES:
            sc = generate(ScenarioTemplate(kind=kind, num_actors=(2, 3)), 1, seed=2)[0]
            kinds.add((kind, len(sc.lanes) > 1))
        assert len(kinds) == len(CONFLICT_TEMPLATES)
