"""Annotation task store: corpus, assignment, revisions, log replay, export.

State is kept in memory and mirrored to a single append-only file of JSON
events; replaying that file reconstructs the exact store state. Submissions
are validated in full before any mutation, so a rejected payload leaves no
trace in memory or on disk.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from quadfuse.records import Dataset, QuadrupleRecord, normalize_hashtag

MAX_HOMEPAGE_VIEW = 10

SCHEMA_RESOURCE = "annotation_schema.json"


def load_schema() -> dict:
    """The shared enum schema consumed by both this service and the UI."""
    text = resources.files("quadfuse.data").joinpath(SCHEMA_RESOURCE).read_text(
        encoding="utf-8")
    return json.loads(text)


_SCHEMA = load_schema()
DRUG_FORMS = tuple(_SCHEMA["enums"]["drug_form"])
CONTACT_APPS = tuple(_SCHEMA["enums"]["contact_app"])
COMMENT_ROLES = tuple(_SCHEMA["enums"]["comment_role"])
TASK_STATUSES = tuple(_SCHEMA["enums"]["task_status"])


class AnnotationError(Exception):
    """Base service error carrying an HTTP-ready code/status/field triple."""

    code = "error"
    status = 400

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field

    def to_doc(self) -> dict:
        doc = {"code": self.code, "message": str(self)}
        if self.field is not None:
            doc["field"] = self.field
        return doc


class ValidationFailed(AnnotationError):
    code = "validation_failed"
    status = 422


class Conflict(AnnotationError):
    code = "conflict"
    status = 409


class NotFound(AnnotationError):
    code = "not_found"
    status = 404


class NoneRemaining(AnnotationError):
    code = "none_remaining"
    status = 404


class Unauthorized(AnnotationError):
    code = "unauthorized"
    status = 401


# ---------------------------------------------------------------------------
# corpus model


@dataclass(frozen=True)
class Comment:
    comment_id: str
    author_id: str
    text: str


@dataclass(frozen=True)
class CorpusUser:
    user_id: str
    bio: str = ""
    image_refs: tuple = ()  # chronological, oldest first


@dataclass(frozen=True)
class CorpusPost:
    post_id: str
    author_id: str
    caption: str
    image_ref: str
    hashtags: tuple = ()
    comments: tuple = ()


@dataclass
class AnnotationTask:
    task_id: str
    post: CorpusPost
    status: str = "unlabeled"
    assigned_to: str | None = None
    revisions: list = field(default_factory=list)

    def to_doc(self) -> dict:
        return {
            "task_id": self.task_id,
            "status": self.status,
            "assigned_to": self.assigned_to,
            "n_revisions": len(self.revisions),
            "post": {
                "post_id": self.post.post_id,
                "author_id": self.post.author_id,
                "caption": self.post.caption,
                "image_ref": self.post.image_ref,
                "hashtags": list(self.post.hashtags),
                "comments": [
                    {"comment_id": c.comment_id, "author_id": c.author_id,
                     "text": c.text}
                    for c in self.post.comments
                ],
            },
        }


# ---------------------------------------------------------------------------
# payload validation


def _require(doc: dict, key: str, parent: str | None = None):
    name = f"{parent}.{key}" if parent else key
    if not isinstance(doc, dict) or key not in doc:
        raise ValidationFailed(f"missing field {name}", field=name)
    return doc[key]


def _require_enum(value, allowed, name: str):
    if value not in allowed:
        raise ValidationFailed(
            f"{name} must be one of {list(allowed)}, got {value!r}", field=name)
    return value


def _require_bool(value, name: str):
    if not isinstance(value, bool):
        raise ValidationFailed(f"{name} must be a boolean", field=name)
    return value


def validate_payload(post: CorpusPost, payload: dict) -> dict:
    """Check a submission against the shared schema; returns a clean copy.

    The payload must carry an image annotation, one comment annotation per
    post comment, and a post verdict whose dealer list is empty exactly when
    ``contains_dealer`` is false.
    """
    if not isinstance(payload, dict):
        raise ValidationFailed("payload must be an object", field="payload")

    image = _require(payload, "image")
    clean_image = {
        "drug_form": _require_enum(_require(image, "drug_form", "image"),
                                   DRUG_FORMS, "image.drug_form"),
        "contact_app": _require_enum(_require(image, "contact_app", "image"),
                                     CONTACT_APPS, "image.contact_app"),
    }

    comments = _require(payload, "comments")
    if not isinstance(comments, list):
        raise ValidationFailed("comments must be a list", field="comments")
    known = {c.comment_id for c in post.comments}
    seen = set()
    clean_comments = []
    for i, entry in enumerate(comments):
        prefix = f"comments[{i}]"
        cid = _require(entry, "comment_id", prefix)
        if cid not in known:
            raise ValidationFailed(f"unknown comment {cid!r}",
                                   field=f"{prefix}.comment_id")
        if cid in seen:
            raise ValidationFailed(f"duplicate annotation for comment {cid!r}",
                                   field=f"{prefix}.comment_id")
        seen.add(cid)
        clean_comments.append({
            "comment_id": cid,
            "role": _require_enum(_require(entry, "role", prefix),
                                  COMMENT_ROLES, f"{prefix}.role"),
            "has_contact_info": _require_bool(
                _require(entry, "has_contact_info", prefix),
                f"{prefix}.has_contact_info"),
        })
    if seen != known:
        missing = sorted(known - seen)
        raise ValidationFailed(f"comments {missing} are not annotated",
                               field="comments")

    verdict = _require(payload, "verdict")
    contains = _require_bool(_require(verdict, "contains_dealer", "verdict"),
                             "verdict.contains_dealer")
    dealer_ids = _require(verdict, "dealer_user_ids", "verdict")
    if not isinstance(dealer_ids, list) or \
            not all(isinstance(u, str) for u in dealer_ids):
        raise ValidationFailed("verdict.dealer_user_ids must be a list of strings",
                               field="verdict.dealer_user_ids")
    if len(set(dealer_ids)) != len(dealer_ids):
        raise ValidationFailed("verdict.dealer_user_ids has duplicates",
                               field="verdict.dealer_user_ids")
    if contains and not dealer_ids:
        raise ValidationFailed(
            "contains_dealer is true but dealer_user_ids is empty",
            field="verdict.dealer_user_ids")
    if not contains and dealer_ids:
        raise ValidationFailed(
            "contains_dealer is false but dealer_user_ids is not empty",
            field="verdict.dealer_user_ids")
    eligible = {c.author_id for c in post.comments} | {post.author_id}
    for uid in dealer_ids:
        if uid not in eligible:
            raise ValidationFailed(
                f"dealer user {uid!r} neither commented on nor authored the post",
                field="verdict.dealer_user_ids")

    return {"image": clean_image, "comments": clean_comments,
            "verdict": {"contains_dealer": contains,
                        "dealer_user_ids": list(dealer_ids)}}


# ---------------------------------------------------------------------------
# store


class AnnotationStore:
    """In-memory annotation state with an append-only JSON event log."""

    def __init__(self, log_path: str | Path | None = None):
        self.log_path = Path(log_path) if log_path is not None else None
        self.users: dict[str, CorpusUser] = {}
        self.posts: dict[str, CorpusPost] = {}
        self.tasks: dict[str, AnnotationTask] = {}
        self._task_order: list[str] = []
        self._replaying = False

    # -- event plumbing ----------------------------------------------------
    def _log(self, event: dict) -> None:
        if self.log_path is None or self._replaying:
            return
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")

    @classmethod
    def replay(cls, log_path: str | Path) -> "AnnotationStore":
        """Rebuild a store by reapplying every event in the log file."""
        store = cls(log_path=log_path)
        store._replaying = True
        try:
            with Path(log_path).open("r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        event = json.loads(line)
                        store._apply(event)
                    except (json.JSONDecodeError, KeyError, TypeError) as exc:
                        raise AnnotationError(
                            f"annotation log line {lineno}: {exc}") from exc
        finally:
            store._replaying = False
        return store

    def _apply(self, event: dict) -> None:
        kind = event["kind"]
        if kind == "add_user":
            u = event["user"]
            self.add_user(CorpusUser(user_id=u["user_id"], bio=u["bio"],
                                     image_refs=tuple(u["image_refs"])))
        elif kind == "add_post":
            p = event["post"]
            self.add_post(CorpusPost(
                post_id=p["post_id"], author_id=p["author_id"],
                caption=p["caption"], image_ref=p["image_ref"],
                hashtags=tuple(p["hashtags"]),
                comments=tuple(Comment(**c) for c in p["comments"])))
        elif kind == "assign":
            self._assign(event["task_id"], event["annotator"])
        elif kind == "submit":
            self.submit(event["task_id"], event["annotator"], event["payload"],
                        idempotency_key=event.get("idempotency_key"))
        elif kind == "reopen":
            self.reopen(event["task_id"])
        else:
            raise AnnotationError(f"unknown log event kind {kind!r}")

    # -- corpus ------------------------------------------------------------
    def add_user(self, user: CorpusUser) -> None:
        self.users[user.user_id] = user
        self._log({"kind": "add_user",
                   "user": {"user_id": user.user_id, "bio": user.bio,
                            "image_refs": list(user.image_refs)}})

    def add_post(self, post: CorpusPost) -> AnnotationTask:
        """Register a post and open its task; one task per post."""
        if post.post_id in self.posts:
            raise AnnotationError(f"duplicate post {post.post_id!r}")
        missing = [uid for uid in
                   [post.author_id] + [c.author_id for c in post.comments]
                   if uid not in self.users]
        if missing:
            raise AnnotationError(
                f"post {post.post_id!r} references unknown users {sorted(set(missing))}")
        self.posts[post.post_id] = post
        task = AnnotationTask(task_id=f"task_{len(self._task_order):05d}", post=post)
        self.tasks[task.task_id] = task
        self._task_order.append(task.task_id)
        self._log({"kind": "add_post",
                   "post": {"post_id": post.post_id, "author_id": post.author_id,
                            "caption": post.caption, "image_ref": post.image_ref,
                            "hashtags": list(post.hashtags),
                            "comments": [c.__dict__ for c in post.comments]}})
        return task

    # -- assignment --------------------------------------------------------
    def _assign(self, task_id: str, annotator: str) -> AnnotationTask:
        task = self.tasks[task_id]
        task.status = "in_progress"
        task.assigned_to = annotator
        self._log({"kind": "assign", "task_id": task_id, "annotator": annotator})
        return task

    def next_task(self, annotator: str) -> AnnotationTask:
        """Oldest unlabeled task; repeatable until the annotator submits."""
        for task_id in self._task_order:
            task = self.tasks[task_id]
            if task.status == "in_progress" and task.assigned_to == annotator:
                return task
        for task_id in self._task_order:
            if self.tasks[task_id].status == "unlabeled":
                return self._assign(task_id, annotator)
        raise NoneRemaining("none remaining")

    # -- submission --------------------------------------------------------
    def submit(self, task_id: str, annotator: str, payload: dict,
               idempotency_key: str | None = None) -> AnnotationTask:
        task = self.tasks.get(task_id)
        if task is None:
            raise NotFound(f"no task {task_id!r}")
        if task.assigned_to != annotator:
            holder = task.assigned_to or "nobody"
            raise Conflict(
                f"task {task_id!r} is assigned to {holder}, not {annotator}")
        if idempotency_key is not None and task.revisions:
            last = task.revisions[-1]
            if last["annotator"] == annotator and \
                    last.get("idempotency_key") == idempotency_key:
                return task  # duplicate delivery of the same submission
        clean = validate_payload(task.post, payload)
        revision = {"annotator": annotator, "seq": len(task.revisions) + 1,
                    "idempotency_key": idempotency_key, **clean}
        task.revisions.append(revision)
        task.status = "done"
        self._log({"kind": "submit", "task_id": task_id, "annotator": annotator,
                   "idempotency_key": idempotency_key, "payload": clean})
        return task

    def reopen(self, task_id: str) -> AnnotationTask:
        task = self.tasks.get(task_id)
        if task is None:
            raise NotFound(f"no task {task_id!r}")
        if task.status != "done":
            raise Conflict(f"task {task_id!r} is not done, cannot reopen")
        task.status = "in_progress"
        self._log({"kind": "reopen", "task_id": task_id,
                   "annotator": task.assigned_to})
        return task

    # -- views -------------------------------------------------------------
    def homepage_view(self, user_id: str) -> dict:
        user = self.users.get(user_id)
        if user is None:
            raise NotFound(f"no user {user_id!r}")
        latest = list(user.image_refs)[-MAX_HOMEPAGE_VIEW:][::-1]
        return {"user_id": user.user_id, "bio": user.bio, "image_refs": latest}

    def stats(self) -> dict:
        by_status = {status: 0 for status in TASK_STATUSES}
        for task in self.tasks.values():
            by_status[task.status] += 1
        return {"users": len(self.users), "posts": len(self.posts),
                "tasks": len(self.tasks), **by_status,
                "revisions": sum(len(t.revisions) for t in self.tasks.values())}

    # -- export ------------------------------------------------------------
    def _record_for(self, post: CorpusPost, user_id: str, label: int) -> QuadrupleRecord:
        user = self.users[user_id]
        by_user = [c.text for c in post.comments if c.author_id == user_id]
        if by_user:
            pc_text = "\n".join(by_user)
        else:
            pc_text = post.caption  # dealer flagged as the post author
        return QuadrupleRecord(
            user_id=user_id,
            post_id=post.post_id,
            label=label,
            pc_text=pc_text,
            pi_ref=post.image_ref,
            hb_text=user.bio,
            hi_refs=tuple(user.image_refs[-MAX_HOMEPAGE_VIEW:]),
            hashtags=frozenset(normalize_hashtag(t) for t in post.hashtags),
        )

    def export_labeled(self) -> Dataset:
        """Training records from done tasks, using each task's last revision.

        Every user named a dealer by the post verdict yields one positive
        record; every commenter whose comments were all judged consumer or
        neither yields one negative.
        """
        records = []
        for task_id in self._task_order:
            task = self.tasks[task_id]
            if not task.revisions:
                continue
            latest = task.revisions[-1]
            post = task.post
            dealers = list(latest["verdict"]["dealer_user_ids"])
            for uid in dealers:
                records.append(self._record_for(post, uid, label=1))
            role_by_comment = {c["comment_id"]: c["role"]
                               for c in latest["comments"]}
            seen = set(dealers)
            for comment in post.comments:
                uid = comment.author_id
                if uid in seen:
                    continue
                seen.add(uid)
                roles = {role_by_comment[c.comment_id]
                         for c in post.comments if c.author_id == uid}
                if roles <= {"consumer", "neither"}:
                    records.append(self._record_for(post, uid, label=0))
        return Dataset(records)


# ---------------------------------------------------------------------------
# corpus from a simulated crawl world

_DEALER_COMMENTS = (
    "dm me for the menu", "hmu on snap fast ship", "wickr in bio, prices dm",
    "got bars and carts, telegram me",
)
_BENIGN_COMMENTS = (
    "love this", "where is this", "so cool", "nice shot", "need this in my life",
)


def corpus_from_world(world) -> tuple[list, list]:
    """Deterministic annotation corpus from a crawl-simulator world.

    Comment text depends only on (post_id, author_id), so two conversions of
    the same world produce byte-identical corpora.
    """
    users = [CorpusUser(user_id=hp.user_id, bio=hp.bio,
                        image_refs=tuple(hp.image_refs))
             for hp in sorted(world.users.values(), key=lambda h: h.user_id)]
    dealers = set(world.ground_truth_dealers)
    posts = []
    for post in world.posts:
        comments = []
        for i, uid in enumerate(post.commenter_ids):
            pool = _DEALER_COMMENTS if uid in dealers else _BENIGN_COMMENTS
            pick = zlib.crc32(f"{post.post_id}:{uid}".encode("utf-8")) % len(pool)
            comments.append(Comment(comment_id=f"{post.post_id}_c{i}",
                                    author_id=uid, text=pool[pick]))
        posts.append(CorpusPost(
            post_id=post.post_id,
            author_id=f"poster_{post.post_id}",
            caption=post.caption,
            image_ref=f"img/post/{post.post_id}.jpg",
            hashtags=tuple(sorted(post.hashtags)),
            comments=tuple(comments)))
    return users, posts


def store_from_world(world, log_path: str | Path | None = None) -> AnnotationStore:
    store = AnnotationStore(log_path=log_path)
    users, posts = corpus_from_world(world)
    author_ids = {p.author_id for p in posts}
    known = {u.user_id for u in users}
    for uid in sorted(author_ids - known):
        store.add_user(CorpusUser(user_id=uid))
    for user in users:
        store.add_user(user)
    for post in posts:
        store.add_post(post)
    return store
