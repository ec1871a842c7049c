// Runtime configuration — edit in place at deploy time, no rebuild needed.
// Empty API base means same-origin (the service serving this bundle).
window.QUADFUSE_API_BASE = "";
// Optional: preset access token; leave empty to prompt the annotator.
window.QUADFUSE_TOKEN = "";
