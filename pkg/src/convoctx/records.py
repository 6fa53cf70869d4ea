"""Parsing and cleaning of raw conversational messages.

Raw records arrive as line-delimited JSON. Cleaning canonicalizes URLs and
hashtags, strips URLs/hashtags/mentions/punctuation from the text, and
tokenizes by whitespace.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .errors import DataError, UrlError

KIND_ORIGINAL = "original"
KIND_REPLY = "reply"
KIND_QUOTE = "quote"
KIND_RETWEET = "retweet"

_SCHEME_RE = re.compile(r"^[a-zA-Z][a-zA-Z0-9+.\-]*://")
_DOMAIN_RE = re.compile(r"^[a-z0-9]([a-z0-9\-]*[a-z0-9])?(\.[a-z0-9]([a-z0-9\-]*[a-z0-9])?)+$")
_URL_TOKEN_RE = re.compile(r"(?:https?://\S+|www\.\S+|\bt\.co/\S+)", re.IGNORECASE)
_HASHTAG_TOKEN_RE = re.compile(r"#\w+")
_MENTION_TOKEN_RE = re.compile(r"@\w+")
_PUNCT_RE = re.compile(r"[^\w\s]", re.UNICODE)

# Domains whose query parameters are load-bearing and therefore kept.
_PARAM_EXEMPT = ("facebook", "google", "youtube")
_VIDEO_SHORT_DOMAINS = {"youtu.be", "yout.be"}
_VIDEO_LONG_DOMAINS = {"youtube.com"}
_MOBILE_PREFIXES = ("www.", "m.", "mobile.", "amp.")


def _split_netloc_path(s: str) -> tuple[str, str]:
    for i, ch in enumerate(s):
        if ch in "/?#":
            return s[:i], s[i:]
    return s, ""


def _strip_prefixes(domain: str) -> str:
    changed = True
    while changed:
        changed = False
        for p in _MOBILE_PREFIXES:
            if domain.startswith(p) and len(domain) > len(p):
                domain = domain[len(p):]
                changed = True
    return domain


def _extract_video_id(domain: str, path: str, query: str) -> str | None:
    if domain in _VIDEO_SHORT_DOMAINS:
        seg = path.strip("/").split("/", 1)[0]
        return seg or None
    for key_eq in ("v=",):
        for part in query.split("&"):
            if part.startswith(key_eq) and len(part) > len(key_eq):
                return part[len(key_eq):]
    m = re.match(r"^/(?:embed|v|shorts|live)/([^/?#]+)", path)
    if m:
        return m.group(1)
    return None


def normalize_url(raw: str) -> str:
    """Canonicalize a URL: drop scheme and www/mobile prefixes, lowercase the
    domain, drop query parameters (except for facebook/google/youtube domains)
    and fragments, de-amp, and collapse video links to youtu.be/<id>.

    Path case is preserved. Idempotent. Raises UrlError when no recognizable
    domain is present.
    """
    if not raw or not raw.strip():
        raise UrlError(f"no recognizable domain in URL: {raw!r}")
    s = raw.strip()
    s = _SCHEME_RE.sub("", s)
    if s.startswith("//"):
        s = s[2:]
    netloc, path = _split_netloc_path(s)
    if "@" in netloc:
        netloc = netloc.rsplit("@", 1)[1]
    if ":" in netloc:
        netloc = netloc.split(":", 1)[0]
    domain = _strip_prefixes(netloc.lower())
    if not _DOMAIN_RE.match(domain):
        raise UrlError(f"no recognizable domain in URL: {raw!r}")

    # Google AMP cache forms carry the real URL in the path.
    if domain.endswith("cdn.ampproject.org"):
        m = re.match(r"^/[cv]/(?:s/)?(.+)$", path)
        if m:
            return normalize_url(m.group(1))
    if domain.endswith("google.com") and path.startswith("/amp/"):
        inner = path[len("/amp/"):]
        if inner.startswith("s/"):
            inner = inner[2:]
        if inner:
            try:
                return normalize_url(inner)
            except UrlError:
                pass

    # Split query and fragment off the path.
    frag_i = path.find("#")
    if frag_i >= 0:
        path = path[:frag_i]
    query = ""
    q_i = path.find("?")
    if q_i >= 0:
        query = path[q_i + 1:]
        path = path[:q_i]

    video_family = domain in _VIDEO_SHORT_DOMAINS or domain in _VIDEO_LONG_DOMAINS \
        or domain.endswith(".youtube.com")
    if video_family:
        vid = _extract_video_id(domain, path, query)
        if vid:
            return f"youtu.be/{vid}"

    keep_params = any(name in domain for name in _PARAM_EXEMPT)

    # De-amp the path suffix.
    if path.endswith("/amp"):
        path = path[:-4]
    elif path.endswith("/amp/"):
        path = path[:-5]
    path = path.rstrip("/")

    out = domain + path
    if keep_params and query:
        out += "?" + query
    return out


def normalize_hashtag(raw: str) -> str:
    """Strip a leading '#' and lowercase (Unicode-aware)."""
    s = raw.strip().lstrip("#")
    if not s:
        raise DataError(f"empty hashtag after normalization: {raw!r}")
    return s.lower()


def clean_text(text: str, hashtags=(), urls=(), mentions=()) -> list[str]:
    """Tokenize message text: remove URLs, hashtags, and mentions, strip
    punctuation, lowercase, split on whitespace."""
    if not text:
        return []
    s = text
    for chunk in list(urls) + list(hashtags) + list(mentions):
        if chunk:
            s = s.replace(chunk, " ")
    s = _URL_TOKEN_RE.sub(" ", s)
    s = _HASHTAG_TOKEN_RE.sub(" ", s)
    s = _MENTION_TOKEN_RE.sub(" ", s)
    s = _PUNCT_RE.sub(" ", s)
    return s.lower().split()


@dataclass
class MessageRecord:
    id: str
    author_id: str
    text: str = ""
    lang: str | None = None
    created_at: datetime | None = None
    hashtags: list[str] = field(default_factory=list)
    urls: list[str] = field(default_factory=list)
    mentions: list[str] = field(default_factory=list)
    reply_to: str | None = None
    quote_of: str | None = None
    retweet_of: str | None = None
    kind: str = KIND_ORIGINAL
    tokens: list[str] = field(default_factory=list)
    canonical_hashtags: list[str] = field(default_factory=list)
    canonical_urls: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        d = {
            "id": self.id,
            "author_id": self.author_id,
            "text": self.text,
            "lang": self.lang,
            "created_at": self.created_at.isoformat() if self.created_at else None,
            "hashtags": self.hashtags,
            "urls": self.urls,
            "mentions": self.mentions,
            "reply_to": self.reply_to,
            "quote_of": self.quote_of,
            "retweet_of": self.retweet_of,
            "kind": self.kind,
            "tokens": self.tokens,
            "canonical_hashtags": self.canonical_hashtags,
            "canonical_urls": self.canonical_urls,
        }
        return json.dumps(d, ensure_ascii=False)


@dataclass
class IngestReport:
    n_lines: int = 0
    n_records: int = 0
    n_malformed: int = 0
    n_duplicates: int = 0
    n_bad_urls: int = 0
    warnings: list[str] = field(default_factory=list)

    def add_warning(self, msg: str, cap: int = 200) -> None:
        if len(self.warnings) < cap:
            self.warnings.append(msg)


def _parse_timestamp(value) -> datetime:
    if isinstance(value, (int, float)):
        return datetime.fromtimestamp(float(value), tz=timezone.utc)
    s = str(value)
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt


def _derive_kind(reply_to, quote_of, retweet_of) -> str:
    # Retweet wins when several references are set; reply beats quote.
    if retweet_of:
        return KIND_RETWEET
    if reply_to:
        return KIND_REPLY
    if quote_of:
        return KIND_QUOTE
    return KIND_ORIGINAL


def record_from_dict(d: dict, report: IngestReport | None = None) -> MessageRecord:
    rec = MessageRecord(
        id=str(d["id"]),
        author_id=str(d["author_id"]),
        text=d.get("text") or "",
        lang=d.get("lang") or None,
        created_at=_parse_timestamp(d["created_at"]),
        hashtags=[str(h) for h in d.get("hashtags") or []],
        urls=[str(u) for u in d.get("urls") or []],
        mentions=[str(m) for m in d.get("mentions") or []],
        reply_to=str(d["reply_to"]) if d.get("reply_to") else None,
        quote_of=str(d["quote_of"]) if d.get("quote_of") else None,
        retweet_of=str(d["retweet_of"]) if d.get("retweet_of") else None,
    )
    rec.kind = _derive_kind(rec.reply_to, rec.quote_of, rec.retweet_of)
    seen = set()
    for h in rec.hashtags:
        try:
            ch = normalize_hashtag(h)
        except DataError:
            continue
        if ch not in seen:
            seen.add(ch)
            rec.canonical_hashtags.append(ch)
    seen = set()
    for u in rec.urls:
        try:
            cu = normalize_url(u)
        except UrlError:
            if report is not None:
                report.n_bad_urls += 1
                report.add_warning(f"record {rec.id}: unparseable URL {u!r}")
            continue
        if cu not in seen:
            seen.add(cu)
            rec.canonical_urls.append(cu)
    rec.tokens = clean_text(rec.text, rec.hashtags, rec.urls, rec.mentions)
    return rec


def parse_records(stream) -> tuple[list[MessageRecord], IngestReport]:
    """Parse line-delimited JSON records, in input order.

    Malformed lines are skipped and counted; duplicate ids keep the first
    occurrence.
    """
    report = IngestReport()
    records: list[MessageRecord] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(stream, start=1):
        report.n_lines += 1
        line = line.strip()
        if not line:
            continue
        try:
            d = json.loads(line)
            if not isinstance(d, dict):
                raise ValueError("record is not an object")
            for key in ("id", "author_id", "created_at"):
                if not d.get(key):
                    raise ValueError(f"missing required field {key!r}")
            rec = record_from_dict(d, report)
        except (ValueError, KeyError, TypeError) as exc:
            report.n_malformed += 1
            report.add_warning(f"line {lineno}: {exc}")
            continue
        if rec.id in seen_ids:
            report.n_duplicates += 1
            report.add_warning(f"line {lineno}: duplicate id {rec.id}")
            continue
        seen_ids.add(rec.id)
        records.append(rec)
    report.n_records = len(records)
    return records, report
