"""Deterministic simulator of the hashtag-driven collection loop.

A synthetic world holds posts (with hashtags, an oracle image score, and
commenters) and user homepages, plus ground-truth dealer accounts. The
crawl visits one hashtag per step — seeds first in input order, then the
most frequently co-mentioned unvisited tag (ties lexicographic) — collects
every above-threshold post under that tag together with its commenters'
accounts, and feeds newly seen hashtags back into the frontier.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .records import normalize_hashtag

DEFAULT_DEALER_THRESHOLD = 50

DEALER_TAG_POOL = (
    "xanax", "oxycontin", "percocet", "mdma", "lsd", "shrooms", "carts",
    "plugged", "ship247", "dmforprices", "pressedbars", "trippy",
)
BENIGN_TAG_POOL = (
    "sunset", "travel", "foodie", "fitness", "art", "music", "nature",
    "coffee", "puppy", "beach", "books", "yoga", "ootd", "diy",
    "garden", "hiking", "recipe", "vinyl", "street", "macro",
)


class CrawlError(ValueError):
    pass


@dataclass
class SimPost:
    post_id: str
    hashtags: frozenset
    image_drug_score: float
    commenter_ids: tuple
    caption: str = ""

    def __post_init__(self):
        if not (0.0 <= self.image_drug_score <= 1.0):
            raise CrawlError(f"image_drug_score out of range: {self.image_drug_score}")
        self.hashtags = frozenset(self.hashtags)
        self.commenter_ids = tuple(self.commenter_ids)


@dataclass
class SimHomepage:
    user_id: str
    bio: str = ""
    image_refs: tuple = ()

    def __post_init__(self):
        self.image_refs = tuple(self.image_refs)


@dataclass
class SyntheticWorld:
    posts: tuple
    users: dict
    ground_truth_dealers: frozenset
    seed: int = 0

    def __post_init__(self):
        self.posts = tuple(self.posts)
        self.ground_truth_dealers = frozenset(self.ground_truth_dealers)
        for post in self.posts:
            for uid in post.commenter_ids:
                if uid not in self.users:
                    raise CrawlError(f"commenter {uid!r} has no homepage entry")

    def posts_with_tag(self, tag: str):
        return [p for p in self.posts if tag in p.hashtags]

    def all_hashtags(self) -> set:
        tags = set()
        for p in self.posts:
            tags |= p.hashtags
        return tags


@dataclass
class CrawlState:
    hashtag_pool: set
    hashtag_freq: dict
    visited_hashtags: set
    collected_posts: set
    collected_accounts: set
    threshold: int
    seed_queue: tuple  # unvisited seeds, in original input order

    def dealer_count(self, world: SyntheticWorld) -> int:
        return len(self.collected_accounts & world.ground_truth_dealers)


def seed_hashtags(seeds, threshold: int = DEFAULT_DEALER_THRESHOLD) -> CrawlState:
    """Initial frontier from manually collected seed hashtags.

    Seeds are normalized (lowercased, '#' stripped) and deduplicated while
    keeping first-occurrence order; nothing is visited yet.
    """
    normalized = []
    for s in seeds:
        tag = normalize_hashtag(s)
        if tag and tag not in normalized:
            normalized.append(tag)
    if not normalized:
        raise CrawlError("empty seed list")
    return CrawlState(
        hashtag_pool=set(normalized), hashtag_freq={tag: 0 for tag in normalized},
        visited_hashtags=set(), collected_posts=set(), collected_accounts=set(),
        threshold=threshold, seed_queue=tuple(normalized),
    )


@dataclass
class StepLog:
    hashtag: str
    posts_hit: int
    accounts_added: int

    def to_dict(self) -> dict:
        return {"hashtag": self.hashtag, "posts_hit": self.posts_hit,
                "accounts_added": self.accounts_added}


def _next_tag(state: CrawlState) -> str | None:
    while state.seed_queue:
        tag, state.seed_queue = state.seed_queue[0], state.seed_queue[1:]
        if tag not in state.visited_hashtags:
            return tag
    unvisited = state.hashtag_pool - state.visited_hashtags
    if not unvisited:
        return None
    # highest co-mention frequency wins; lexicographic ascending breaks ties
    return min(unvisited, key=lambda t: (-state.hashtag_freq.get(t, 0), t))


def crawl_step(state: CrawlState, world: SyntheticWorld,
               detector_threshold: float) -> StepLog | None:
    """Visit one hashtag; returns the step log, or None if the frontier is spent."""
    tag = _next_tag(state)
    if tag is None:
        return None
    state.visited_hashtags.add(tag)
    posts_hit = 0
    before = len(state.collected_accounts)
    for post in world.posts_with_tag(tag):
        if post.image_drug_score < detector_threshold:
            continue
        posts_hit += 1
        state.collected_posts.add(post.post_id)
        state.collected_accounts.update(post.commenter_ids)
        for other in post.hashtags:
            if other == tag:
                continue
            state.hashtag_pool.add(other)
            state.hashtag_freq[other] = state.hashtag_freq.get(other, 0) + 1
    return StepLog(hashtag=tag, posts_hit=posts_hit,
                   accounts_added=len(state.collected_accounts) - before)


@dataclass
class CrawlReport:
    steps: int
    collected_accounts: frozenset
    collected_posts: frozenset
    dealer_recall: float
    hashtag_coverage: float
    trajectory: tuple

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "collected_accounts": sorted(self.collected_accounts),
            "collected_posts": sorted(self.collected_posts),
            "dealer_recall": self.dealer_recall,
            "hashtag_coverage": self.hashtag_coverage,
            "trajectory": [s.to_dict() for s in self.trajectory],
        }


def run_crawl(state: CrawlState, world: SyntheticWorld,
              detector_threshold: float) -> CrawlReport:
    """Loop until enough ground-truth dealers are collected or no tags remain."""
    trajectory = []
    while state.dealer_count(world) < state.threshold:
        step = crawl_step(state, world, detector_threshold)
        if step is None:
            break
        trajectory.append(step)
    gt = world.ground_truth_dealers
    recall = len(state.collected_accounts & gt) / len(gt) if gt else 1.0
    world_tags = world.all_hashtags()
    coverage = (len(state.visited_hashtags & world_tags) / len(world_tags)
                if world_tags else 0.0)
    return CrawlReport(steps=len(trajectory),
                       collected_accounts=frozenset(state.collected_accounts),
                       collected_posts=frozenset(state.collected_posts),
                       dealer_recall=recall, hashtag_coverage=coverage,
                       trajectory=tuple(trajectory))


@dataclass
class WorldSpec:
    """Generator knobs; ``n_components`` > 1 splits dealer tags into disjoint
    pools, producing hashtag-disconnected dealer clusters."""

    n_posts: int = 200
    n_users: int = 80
    dealer_fraction: float = 0.2
    dealer_post_fraction: float = 0.3
    tags_per_post: int = 3
    n_components: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_posts < 1 or self.n_users < 1:
            raise CrawlError("counts must be positive")
        if not (0.0 <= self.dealer_fraction <= 1.0):
            raise CrawlError("dealer_fraction must lie in [0, 1]")
        if self.n_components < 1:
            raise CrawlError("n_components must be >= 1")


def generate_world(spec: WorldSpec) -> SyntheticWorld:
    """Deterministic world: dealer posts score high and carry dealer tags;
    every ground-truth dealer comments on at least one dealer post."""
    rng = random.Random(spec.seed)
    n_dealers = int(round(spec.n_users * spec.dealer_fraction))
    dealer_ids = [f"dealer_{i:04d}" for i in range(n_dealers)]
    benign_ids = [f"user_{i:04d}" for i in range(spec.n_users - n_dealers)]

    users = {}
    for uid in dealer_ids:
        users[uid] = SimHomepage(user_id=uid, bio=f"dm for menu {uid}",
                                 image_refs=tuple(f"img/home/{uid}_{j}.jpg" for j in range(3)))
    for uid in benign_ids:
        users[uid] = SimHomepage(user_id=uid, bio=f"living my best life {uid}",
                                 image_refs=tuple(f"img/home/{uid}_{j}.jpg" for j in range(2)))

    # dealer tags AND dealer accounts are partitioned by component, so a
    # hashtag-disconnected component carries dealers unreachable from outside
    components = [list(DEALER_TAG_POOL[i::spec.n_components])
                  for i in range(spec.n_components)]
    dealer_groups = [dealer_ids[i::spec.n_components] for i in range(spec.n_components)]
    n_dealer_posts = int(round(spec.n_posts * spec.dealer_post_fraction))
    if n_dealers > 0:
        n_dealer_posts = max(n_dealer_posts, spec.n_components)

    posts = []
    component_posts = [[] for _ in range(spec.n_components)]
    for i in range(spec.n_posts):
        is_dealer_post = i < n_dealer_posts and n_dealers > 0
        if is_dealer_post:
            comp = i % spec.n_components
            pool = components[comp]
            group = dealer_groups[comp] or dealer_ids
            tags = rng.sample(pool, k=min(spec.tags_per_post, len(pool)))
            score = rng.uniform(0.55, 0.95)
            commenters = rng.sample(group, k=min(len(group), rng.randint(1, 3)))
            if benign_ids and rng.random() < 0.3:
                commenters.append(rng.choice(benign_ids))
            caption = "hit me up " + " ".join(tags)
        else:
            tags = rng.sample(BENIGN_TAG_POOL, k=min(spec.tags_per_post, len(BENIGN_TAG_POOL)))
            score = rng.uniform(0.05, 0.45)
            source = benign_ids if benign_ids else dealer_ids
            commenters = rng.sample(source, k=min(len(source), rng.randint(1, 3)))
            caption = "check this out " + " ".join(tags)
        post = SimPost(post_id=f"post_{i:05d}", hashtags=frozenset(tags),
                       image_drug_score=round(score, 6),
                       commenter_ids=tuple(commenters), caption=caption)
        posts.append(post)
        if is_dealer_post:
            component_posts[i % spec.n_components].append(i)

    # guarantee every dealer comments somewhere within its own component so
    # recall-1.0 worlds are achievable and disconnection caps recall cleanly
    for comp, group in enumerate(dealer_groups):
        targets = component_posts[comp]
        if not targets:
            continue
        for j, uid in enumerate(group):
            post = posts[targets[j % len(targets)]]
            if uid not in post.commenter_ids:
                post.commenter_ids = post.commenter_ids + (uid,)

    return SyntheticWorld(posts=tuple(posts), users=users,
                          ground_truth_dealers=frozenset(dealer_ids), seed=spec.seed)


def save_world(world: SyntheticWorld, path: str | Path) -> None:
    """Line-delimited JSON: one meta line, then user lines, then post lines."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        meta = {"kind": "meta", "seed": world.seed,
                "ground_truth_dealers": sorted(world.ground_truth_dealers)}
        fh.write(json.dumps(meta, ensure_ascii=False) + "\n")
        for uid in sorted(world.users):
            u = world.users[uid]
            fh.write(json.dumps({"kind": "user", "user_id": u.user_id, "bio": u.bio,
                                 "image_refs": list(u.image_refs)},
                                ensure_ascii=False) + "\n")
        for p in world.posts:
            fh.write(json.dumps({"kind": "post", "post_id": p.post_id,
                                 "hashtags": sorted(p.hashtags),
                                 "image_drug_score": p.image_drug_score,
                                 "commenter_ids": list(p.commenter_ids),
                                 "caption": p.caption}, ensure_ascii=False) + "\n")


def load_world(path: str | Path) -> SyntheticWorld:
    path = Path(path)
    meta = None
    users = {}
    posts = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                kind = obj.pop("kind")
                if kind == "meta":
                    meta = obj
                elif kind == "user":
                    users[obj["user_id"]] = SimHomepage(**obj)
                elif kind == "post":
                    posts.append(SimPost(
                        post_id=obj["post_id"], hashtags=frozenset(obj["hashtags"]),
                        image_drug_score=obj["image_drug_score"],
                        commenter_ids=tuple(obj["commenter_ids"]),
                        caption=obj.get("caption", "")))
                else:
                    raise CrawlError(f"unknown record kind {kind!r}")
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise CrawlError(f"world file line {lineno}: {exc}") from exc
    if meta is None:
        raise CrawlError("world file has no meta line")
    return SyntheticWorld(posts=tuple(posts), users=users,
                          ground_truth_dealers=frozenset(meta["ground_truth_dealers"]),
                          seed=meta.get("seed", 0))
