"""Annotation service: assignment, validation, revisions, log replay, export.

Everything user-facing is exercised through the HTTP API with a test
client; the event log and world-corpus converter are additionally checked
at store level.
"""

import json

import pytest
from fastapi.testclient import TestClient

from quadfuse.annotation import (
    AnnotationError,
    AnnotationStore,
    Conflict,
    CorpusPost,
    CorpusUser,
    Comment,
    create_app,
    load_schema,
    store_from_world,
)
from quadfuse.crawlsim import WorldSpec, generate_world
from quadfuse.records import load_dataset

TOKENS = {"tok-one": "ann1", "tok-two": "ann2"}


def seed_corpus(store):
    """Two posts; p1 has three commenters, p2 has one."""
    store.add_user(CorpusUser("poster_1", bio="menu in bio",
                              image_refs=("img/h/p1_0.jpg",)))
    store.add_user(CorpusUser("poster_2", bio="just vibes"))
    store.add_user(CorpusUser("alice", bio="dm me",
                              image_refs=("img/h/a0.jpg", "img/h/a1.jpg")))
    store.add_user(CorpusUser("bob", bio="hiker"))
    store.add_user(CorpusUser("cara", bio="artist",
                              image_refs=("img/h/c0.jpg",)))
    store.add_post(CorpusPost(
        post_id="p1", author_id="poster_1", caption="fresh stock #xanax",
        image_ref="img/post/p1.jpg", hashtags=("xanax", "ship247"),
        comments=(
            Comment("p1_c0", "alice", "dm me for prices"),
            Comment("p1_c1", "bob", "love this"),
            Comment("p1_c2", "cara", "so cool"),
        )))
    store.add_post(CorpusPost(
        post_id="p2", author_id="poster_2", caption="sunset walk",
        image_ref="img/post/p2.jpg", hashtags=("sunset",),
        comments=(Comment("p2_c0", "bob", "beautiful"),)))
    return store


@pytest.fixture
def store():
    return seed_corpus(AnnotationStore())


@pytest.fixture
def client(store):
    return TestClient(create_app(store, TOKENS))


def auth(token="tok-one", idempotency_key=None):
    headers = {"Authorization": f"Bearer {token}"}
    if idempotency_key is not None:
        headers["Idempotency-Key"] = idempotency_key
    return headers


def payload_for(task_doc, dealers=(), roles=None, has_contact=False):
    """A valid submission for the task, with selectable roles/verdict."""
    roles = roles or {}
    return {
        "image": {"drug_form": "pills", "contact_app": "snapchat"},
        "comments": [
            {"comment_id": c["comment_id"],
             "role": roles.get(c["author_id"], "neither"),
             "has_contact_info": has_contact}
            for c in task_doc["post"]["comments"]
        ],
        "verdict": {"contains_dealer": bool(dealers),
                    "dealer_user_ids": list(dealers)},
    }


def take_and_submit(client, token, dealers=(), roles=None):
    task = client.get("/api/v1/tasks/next", headers=auth(token)).json()
    resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                       headers=auth(token),
                       json=payload_for(task, dealers=dealers, roles=roles))
    assert resp.status_code == 200, resp.text
    return task, resp.json()


# ---------------------------------------------------------------------------
# auth


class TestAuth:
    def test_missing_token_rejected(self, client):
        resp = client.get("/api/v1/tasks/next")
        assert resp.status_code == 401
        assert resp.json()["code"] == "unauthorized"

    def test_unknown_token_rejected(self, client):
        resp = client.get("/api/v1/tasks/next", headers=auth("tok-bogus"))
        assert resp.status_code == 401

    def test_non_bearer_scheme_rejected(self, client):
        resp = client.get("/api/v1/tasks/next",
                          headers={"Authorization": "Basic tok-one"})
        assert resp.status_code == 401

    def test_empty_token_table_rejected(self, store):
        with pytest.raises(ValueError, match="token table"):
            create_app(store, {})


# ---------------------------------------------------------------------------
# schema endpoint


class TestSchema:
    def test_served_schema_matches_shared_file(self, client):
        resp = client.get("/api/v1/schema")
        assert resp.status_code == 200
        assert resp.json() == load_schema()

    def test_schema_lists_expected_enums(self, client):
        enums = client.get("/api/v1/schema").json()["enums"]
        assert enums["drug_form"] == ["powder", "pills", "liquid", "cannabis",
                                      "mushroom", "lsd", "none"]
        assert enums["contact_app"] == ["snapchat", "wickr", "kik", "whatsapp",
                                        "telegram", "email", "none"]
        assert enums["comment_role"] == ["dealer", "consumer", "neither"]


# ---------------------------------------------------------------------------
# task assignment


class TestNextTask:
    def test_oldest_unlabeled_first(self, client):
        task = client.get("/api/v1/tasks/next", headers=auth()).json()
        assert task["task_id"] == "task_00000"
        assert task["status"] == "in_progress"
        assert task["assigned_to"] == "ann1"

    def test_idempotent_until_submitted(self, client):
        first = client.get("/api/v1/tasks/next", headers=auth()).json()
        second = client.get("/api/v1/tasks/next", headers=auth()).json()
        assert first["task_id"] == second["task_id"]

    def test_two_annotators_get_disjoint_tasks(self, client):
        one = client.get("/api/v1/tasks/next", headers=auth("tok-one")).json()
        two = client.get("/api/v1/tasks/next", headers=auth("tok-two")).json()
        assert one["task_id"] != two["task_id"]

    def test_new_task_after_submit(self, client):
        task, _ = take_and_submit(client, "tok-one")
        nxt = client.get("/api/v1/tasks/next", headers=auth()).json()
        assert nxt["task_id"] != task["task_id"]

    def test_none_remaining(self, client):
        take_and_submit(client, "tok-one")
        take_and_submit(client, "tok-one")
        resp = client.get("/api/v1/tasks/next", headers=auth())
        assert resp.status_code == 404
        body = resp.json()
        assert body["code"] == "none_remaining"
        assert body["message"] == "none remaining"

    def test_task_doc_carries_post_and_comments(self, client):
        task = client.get("/api/v1/tasks/next", headers=auth()).json()
        post = task["post"]
        assert post["post_id"] == "p1"
        assert [c["comment_id"] for c in post["comments"]] == \
            ["p1_c0", "p1_c1", "p1_c2"]
        assert post["hashtags"] == ["xanax", "ship247"]


# ---------------------------------------------------------------------------
# submission + validation


class TestSubmit:
    def test_submit_marks_done_with_one_revision(self, client):
        _, doc = take_and_submit(client, "tok-one", dealers=["alice"],
                                 roles={"alice": "dealer"})
        assert doc["status"] == "done"
        assert doc["n_revisions"] == 1

    def test_unknown_task_404(self, client):
        resp = client.post("/api/v1/tasks/task_99999/submit",
                           headers=auth(), json={})
        assert resp.status_code == 404
        assert resp.json()["code"] == "not_found"

    def test_submit_without_assignment_conflicts(self, client):
        resp = client.post("/api/v1/tasks/task_00000/submit", headers=auth(),
                           json={"image": {}, "comments": [], "verdict": {}})
        assert resp.status_code == 409
        assert resp.json()["code"] == "conflict"

    def test_submit_other_annotators_task_conflicts(self, client):
        task = client.get("/api/v1/tasks/next", headers=auth("tok-one")).json()
        resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                           headers=auth("tok-two"), json=payload_for(task))
        assert resp.status_code == 409

    def test_bad_enum_names_offending_field(self, client):
        task = client.get("/api/v1/tasks/next", headers=auth()).json()
        payload = payload_for(task)
        payload["image"]["drug_form"] = "powder_blue"
        resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                           headers=auth(), json=payload)
        assert resp.status_code == 422
        body = resp.json()
        assert body["code"] == "validation_failed"
        assert body["field"] == "image.drug_form"

    def test_bad_role_names_indexed_field(self, client):
        task = client.get("/api/v1/tasks/next", headers=auth()).json()
        payload = payload_for(task)
        payload["comments"][1]["role"] = "fan"
        resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                           headers=auth(), json=payload)
        assert resp.status_code == 422
        assert resp.json()["field"] == "comments[1].role"

    def test_dealer_verdict_with_empty_list_rejected(self, client):
        task = client.get("/api/v1/tasks/next", headers=auth()).json()
        payload = payload_for(task)
        payload["verdict"] = {"contains_dealer": True, "dealer_user_ids": []}
        resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                           headers=auth(), json=payload)
        assert resp.status_code == 422
        assert resp.json()["field"] == "verdict.dealer_user_ids"

    def test_clean_verdict_with_dealers_rejected(self, client):
        task = client.get("/api/v1/tasks/next", headers=auth()).json()
        payload = payload_for(task)
        payload["verdict"] = {"contains_dealer": False,
                              "dealer_user_ids": ["alice"]}
        resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                           headers=auth(), json=payload)
        assert resp.status_code == 422
        assert resp.json()["field"] == "verdict.dealer_user_ids"

    def test_dealer_outside_post_rejected(self, client):
        task = client.get("/api/v1/tasks/next", headers=auth()).json()
        payload = payload_for(task, dealers=["poster_2"])
        resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                           headers=auth(), json=payload)
        assert resp.status_code == 422
        assert resp.json()["field"] == "verdict.dealer_user_ids"

    def test_unannotated_comment_rejected(self, client):
        task = client.get("/api/v1/tasks/next", headers=auth()).json()
        payload = payload_for(task)
        payload["comments"].pop()
        resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                           headers=auth(), json=payload)
        assert resp.status_code == 422
        assert resp.json()["field"] == "comments"

    def test_unknown_comment_id_rejected(self, client):
        task = client.get("/api/v1/tasks/next", headers=auth()).json()
        payload = payload_for(task)
        payload["comments"][0]["comment_id"] = "p9_c9"
        resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                           headers=auth(), json=payload)
        assert resp.status_code == 422
        assert resp.json()["field"] == "comments[0].comment_id"

    def test_rejected_submit_changes_nothing(self, store, client):
        task = client.get("/api/v1/tasks/next", headers=auth()).json()
        payload = payload_for(task)
        payload["image"]["contact_app"] = "carrier_pigeon"
        resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                           headers=auth(), json=payload)
        assert resp.status_code == 422
        held = store.tasks[task["task_id"]]
        assert held.status == "in_progress"
        assert held.revisions == []

    def test_resubmit_appends_second_revision(self, client):
        task, _ = take_and_submit(client, "tok-one")
        resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                           headers=auth(),
                           json=payload_for(task, dealers=["alice"],
                                            roles={"alice": "dealer"}))
        assert resp.status_code == 200
        assert resp.json()["n_revisions"] == 2

    def test_idempotency_key_dedupes_double_submit(self, client):
        task = client.get("/api/v1/tasks/next", headers=auth()).json()
        payload = payload_for(task)
        for _ in range(2):
            resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                               headers=auth(idempotency_key="abc-123"),
                               json=payload)
            assert resp.status_code == 200
        assert resp.json()["n_revisions"] == 1

    def test_distinct_keys_still_revise(self, client):
        task = client.get("/api/v1/tasks/next", headers=auth()).json()
        payload = payload_for(task)
        for key in ("k1", "k2"):
            resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                               headers=auth(idempotency_key=key), json=payload)
        assert resp.json()["n_revisions"] == 2


# ---------------------------------------------------------------------------
# homepage view


class TestHomepage:
    def test_bio_and_refs(self, client):
        resp = client.get("/api/v1/users/alice/homepage", headers=auth())
        assert resp.status_code == 200
        assert resp.json() == {"user_id": "alice", "bio": "dm me",
                               "image_refs": ["img/h/a1.jpg", "img/h/a0.jpg"]}

    def test_caps_at_latest_ten_newest_first(self, store):
        refs = tuple(f"img/{i:02d}.jpg" for i in range(14))
        store.add_user(CorpusUser("prolific", bio="busy", image_refs=refs))
        client = TestClient(create_app(store, TOKENS))
        got = client.get("/api/v1/users/prolific/homepage",
                         headers=auth()).json()
        assert len(got["image_refs"]) == 10
        assert got["image_refs"] == [f"img/{i:02d}.jpg"
                                     for i in range(13, 3, -1)]

    def test_unknown_user_404(self, client):
        resp = client.get("/api/v1/users/nobody/homepage", headers=auth())
        assert resp.status_code == 404
        assert resp.json()["code"] == "not_found"


# ---------------------------------------------------------------------------
# export


class TestExport:
    def test_two_dealer_commenters_two_positives(self, client):
        take_and_submit(client, "tok-one", dealers=["alice", "cara"],
                        roles={"alice": "dealer", "cara": "dealer"})
        body = client.post("/api/v1/export", headers=auth()).json()
        positives = [r for r in body["records"] if r["label"] == 1]
        assert len(positives) == 2
        assert {r["user_id"] for r in positives} == {"alice", "cara"}
        assert all(r["post_id"] == "p1" for r in positives)

    def test_clean_post_yields_all_negatives(self, client):
        take_and_submit(client, "tok-one", dealers=())  # p1, 3 commenters
        body = client.post("/api/v1/export", headers=auth()).json()
        assert body["count"] == 3
        assert all(r["label"] == 0 for r in body["records"])
        assert {r["user_id"] for r in body["records"]} == \
            {"alice", "bob", "cara"}

    def test_mixed_post_splits_positive_and_negative(self, client):
        take_and_submit(client, "tok-one", dealers=["alice"],
                        roles={"alice": "dealer", "bob": "consumer"})
        body = client.post("/api/v1/export", headers=auth()).json()
        by_user = {r["user_id"]: r["label"] for r in body["records"]}
        assert by_user == {"alice": 1, "bob": 0, "cara": 0}

    def test_positive_record_fields(self, client):
        take_and_submit(client, "tok-one", dealers=["alice"],
                        roles={"alice": "dealer"})
        body = client.post("/api/v1/export", headers=auth()).json()
        rec = next(r for r in body["records"] if r["label"] == 1)
        assert rec["pc_text"] == "dm me for prices"
        assert rec["pi_ref"] == "img/post/p1.jpg"
        assert rec["hb_text"] == "dm me"
        assert rec["hi_refs"] == ["img/h/a0.jpg", "img/h/a1.jpg"]
        assert sorted(rec["hashtags"]) == ["ship247", "xanax"]

    def test_post_author_can_be_the_dealer(self, client):
        take_and_submit(client, "tok-one", dealers=["poster_1"])
        body = client.post("/api/v1/export", headers=auth()).json()
        rec = next(r for r in body["records"] if r["label"] == 1)
        assert rec["user_id"] == "poster_1"
        assert rec["pc_text"] == "fresh stock #xanax"  # caption stands in

    def test_undone_tasks_are_excluded(self, client):
        client.get("/api/v1/tasks/next", headers=auth())  # assigned, no submit
        body = client.post("/api/v1/export", headers=auth()).json()
        assert body["count"] == 0

    def test_last_revision_wins(self, client):
        task, _ = take_and_submit(client, "tok-one", dealers=["alice"],
                                  roles={"alice": "dealer"})
        client.post(f"/api/v1/tasks/{task['task_id']}/submit", headers=auth(),
                    json=payload_for(task))  # second pass: nobody is a dealer
        body = client.post("/api/v1/export", headers=auth()).json()
        assert all(r["label"] == 0 for r in body["records"])

    def test_export_loads_as_core_dataset(self, client, tmp_path):
        take_and_submit(client, "tok-one", dealers=["alice", "cara"],
                        roles={"alice": "dealer", "cara": "dealer"})
        take_and_submit(client, "tok-one")
        body = client.post("/api/v1/export", headers=auth()).json()
        path = tmp_path / "labeled.jsonl"
        with path.open("w", encoding="utf-8") as fh:
            for rec in body["records"]:
                fh.write(json.dumps(rec) + "\n")
        ds = load_dataset(path)
        assert len(ds) == body["count"]
        assert sorted(ds.labels(), reverse=True)[:2] == [1, 1]

    def test_server_side_export_file(self, client, tmp_path):
        take_and_submit(client, "tok-one", dealers=["alice"],
                        roles={"alice": "dealer"})
        out = tmp_path / "export.jsonl"
        body = client.post("/api/v1/export", headers=auth(),
                           json={"path": str(out)}).json()
        assert body["path"] == str(out)
        assert len(load_dataset(out)) == body["count"]


# ---------------------------------------------------------------------------
# stats


class TestStats:
    def test_counts_track_lifecycle(self, client):
        stats = client.get("/api/v1/stats", headers=auth()).json()
        assert stats["tasks"] == 2 and stats["unlabeled"] == 2
        take_and_submit(client, "tok-one")
        client.get("/api/v1/tasks/next", headers=auth("tok-two"))
        stats = client.get("/api/v1/stats", headers=auth()).json()
        assert stats["done"] == 1
        assert stats["in_progress"] == 1
        assert stats["unlabeled"] == 0
        assert stats["revisions"] == 1


# ---------------------------------------------------------------------------
# event log + replay


class TestReplay:
    def drive(self, client):
        take_and_submit(client, "tok-one", dealers=["alice", "cara"],
                        roles={"alice": "dealer", "cara": "dealer"})
        task = client.get("/api/v1/tasks/next", headers=auth("tok-two")).json()
        client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                    headers=auth("tok-two"), json=payload_for(task))

    def test_replay_reproduces_state(self, tmp_path):
        log = tmp_path / "events.jsonl"
        store = seed_corpus(AnnotationStore(log_path=log))
        client = TestClient(create_app(store, TOKENS))
        self.drive(client)

        twin = AnnotationStore.replay(log)
        assert twin.stats() == store.stats()
        for task_id, task in store.tasks.items():
            assert twin.tasks[task_id].to_doc() == task.to_doc()
            assert twin.tasks[task_id].revisions == task.revisions
        assert twin.export_labeled().records == store.export_labeled().records

    def test_replay_is_append_only_safe(self, tmp_path):
        log = tmp_path / "events.jsonl"
        store = seed_corpus(AnnotationStore(log_path=log))
        client = TestClient(create_app(store, TOKENS))
        take_and_submit(client, "tok-one")
        n_lines = len(log.read_text(encoding="utf-8").splitlines())

        twin = AnnotationStore.replay(log)
        twin_client = TestClient(create_app(twin, TOKENS))
        take_and_submit(twin_client, "tok-two")
        lines = log.read_text(encoding="utf-8").splitlines()
        assert len(lines) == n_lines + 2  # assign + submit, nothing rewritten
        assert AnnotationStore.replay(log).stats() == twin.stats()

    def test_rejected_submission_not_logged(self, tmp_path):
        log = tmp_path / "events.jsonl"
        store = seed_corpus(AnnotationStore(log_path=log))
        client = TestClient(create_app(store, TOKENS))
        task = client.get("/api/v1/tasks/next", headers=auth()).json()
        before = len(log.read_text(encoding="utf-8").splitlines())
        payload = payload_for(task)
        payload["image"]["drug_form"] = "gas"
        client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                    headers=auth(), json=payload)
        after = len(log.read_text(encoding="utf-8").splitlines())
        assert after == before

    def test_malformed_log_line_reports_number(self, tmp_path):
        log = tmp_path / "events.jsonl"
        store = seed_corpus(AnnotationStore(log_path=log))
        with log.open("a", encoding="utf-8") as fh:
            fh.write("{not json\n")
        with pytest.raises(AnnotationError, match="line 8"):
            AnnotationStore.replay(log)


# ---------------------------------------------------------------------------
# store-level odds and ends


class TestStoreLevel:
    def test_post_with_unknown_commenter_rejected(self):
        store = AnnotationStore()
        store.add_user(CorpusUser("a"))
        with pytest.raises(AnnotationError, match="unknown users"):
            store.add_post(CorpusPost(
                post_id="p", author_id="a", caption="", image_ref="i",
                comments=(Comment("c0", "ghost", "hi"),)))

    def test_duplicate_post_rejected(self, store):
        with pytest.raises(AnnotationError, match="duplicate post"):
            store.add_post(store.posts["p1"])

    def test_reopen_returns_task_to_in_progress(self, store):
        task = store.next_task("ann1")
        store.submit(task.task_id, "ann1", payload_for(task.to_doc()))
        store.reopen(task.task_id)
        assert store.tasks[task.task_id].status == "in_progress"
        again = store.next_task("ann1")
        assert again.task_id == task.task_id

    def test_reopen_requires_done(self, store):
        task = store.next_task("ann1")
        with pytest.raises(Conflict):
            store.reopen(task.task_id)


class TestWorldCorpus:
    def test_conversion_is_deterministic(self, tmp_path):
        world = generate_world(WorldSpec(n_posts=20, n_users=10, seed=3))
        one = store_from_world(world)
        two = store_from_world(world)
        assert one.stats() == two.stats()
        for task_id in one.tasks:
            assert one.tasks[task_id].to_doc() == two.tasks[task_id].to_doc()

    def test_world_store_is_workable_end_to_end(self, tmp_path):
        world = generate_world(WorldSpec(n_posts=12, n_users=8, seed=5))
        log = tmp_path / "log.jsonl"
        store = store_from_world(world, log_path=log)
        client = TestClient(create_app(store, {"t": "ann"}))
        task = client.get("/api/v1/tasks/next",
                          headers={"Authorization": "Bearer t"}).json()
        commenters = [c["author_id"] for c in task["post"]["comments"]]
        dealers = [u for u in commenters if u in world.ground_truth_dealers]
        payload = payload_for(task, dealers=dealers,
                              roles={u: "dealer" for u in dealers})
        resp = client.post(f"/api/v1/tasks/{task['task_id']}/submit",
                           headers={"Authorization": "Bearer t"}, json=payload)
        assert resp.status_code == 200
        assert AnnotationStore.replay(log).stats() == store.stats()
