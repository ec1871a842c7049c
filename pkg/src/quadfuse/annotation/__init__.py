"""Annotation workbench backend: task store, event log, HTTP service."""

from .service import API_PREFIX, create_app
from .store import (
    COMMENT_ROLES,
    CONTACT_APPS,
    DRUG_FORMS,
    TASK_STATUSES,
    AnnotationError,
    AnnotationStore,
    AnnotationTask,
    Comment,
    Conflict,
    CorpusPost,
    CorpusUser,
    NoneRemaining,
    NotFound,
    Unauthorized,
    ValidationFailed,
    corpus_from_world,
    load_schema,
    store_from_world,
    validate_payload,
)

__all__ = [
    "API_PREFIX",
    "COMMENT_ROLES",
    "CONTACT_APPS",
    "DRUG_FORMS",
    "TASK_STATUSES",
    "AnnotationError",
    "AnnotationStore",
    "AnnotationTask",
    "Comment",
    "Conflict",
    "CorpusPost",
    "CorpusUser",
    "NoneRemaining",
    "NotFound",
    "Unauthorized",
    "ValidationFailed",
    "corpus_from_world",
    "create_app",
    "load_schema",
    "store_from_world",
    "validate_payload",
]
