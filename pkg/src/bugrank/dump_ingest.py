"""Streaming ingestion of Stack Exchange dump XML into a local JSONL store.

The dump ships as ``<root><row .../><row .../></root>`` files (Posts.xml,
Users.xml, Comments.xml).  Rows are parsed incrementally so memory stays
bounded by the largest single row, never by file size.  Post bodies are
HTML; :func:`strip_html` separates prose from ``<code>``/``<pre>`` blocks.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, asdict, field
from html.parser import HTMLParser
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator


class DumpParseError(Exception):
    """Malformed dump XML; carries the approximate byte offset."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (near byte offset {byte_offset})")
        self.byte_offset = byte_offset


class StoreError(Exception):
    """Store-level failure (missing id, wrong record kind, I/O)."""


POST_TYPE_QUESTION = 1
POST_TYPE_ANSWER = 2


@dataclass(frozen=True)
class RawPost:
    id: int
    post_type: int  # 1 = Question, 2 = Answer
    body: str
    score: int = 0
    accepted_answer_id: int | None = None
    parent_id: int | None = None
    creation_date: str | None = None
    view_count: int | None = None
    owner_user_id: int | None = None
    title: str | None = None
    tags: str | None = None
    answer_count: int | None = None
    comment_count: int | None = None
    favorite_count: int | None = None


@dataclass(frozen=True)
class RawUser:
    id: int
    reputation: int = 0
    display_name: str = ""
    creation_date: str | None = None


@dataclass(frozen=True)
class RawComment:
    id: int
    post_id: int
    score: int = 0
    text: str = ""
    user_id: int | None = None


@dataclass(frozen=True)
class StrippedBody:
    text: str
    code_blocks: list[str]
    p_tag_count: int
    code_tag_count: int
    raw_char_count: int


@dataclass
class ParseStats:
    parsed: int = 0
    skipped: int = 0


def _opt_int(attrs: dict[str, str], key: str) -> int | None:
    v = attrs.get(key)
    return int(v) if v is not None else None


def _post_from_row(attrs: dict[str, str]) -> RawPost:
    return RawPost(
        id=int(attrs["Id"]),
        post_type=int(attrs["PostTypeId"]),
        body=attrs.get("Body", ""),
        score=int(attrs.get("Score", "0")),
        accepted_answer_id=_opt_int(attrs, "AcceptedAnswerId"),
        parent_id=_opt_int(attrs, "ParentId"),
        creation_date=attrs.get("CreationDate"),
        view_count=_opt_int(attrs, "ViewCount"),
        owner_user_id=_opt_int(attrs, "OwnerUserId"),
        title=attrs.get("Title"),
        tags=attrs.get("Tags"),
        answer_count=_opt_int(attrs, "AnswerCount"),
        comment_count=_opt_int(attrs, "CommentCount"),
        favorite_count=_opt_int(attrs, "FavoriteCount"),
    )


def _user_from_row(attrs: dict[str, str]) -> RawUser:
    return RawUser(
        id=int(attrs["Id"]),
        reputation=int(attrs.get("Reputation", "0")),
        display_name=attrs.get("DisplayName", ""),
        creation_date=attrs.get("CreationDate"),
    )


def _comment_from_row(attrs: dict[str, str]) -> RawComment:
    return RawComment(
        id=int(attrs["Id"]),
        post_id=int(attrs["PostId"]),
        score=int(attrs.get("Score", "0")),
        text=attrs.get("Text", ""),
        user_id=_opt_int(attrs, "UserId"),
    )


_ROW_DECODERS = {
    "posts": (_post_from_row, ("Id", "PostTypeId")),
    "users": (_user_from_row, ("Id",)),
    "comments": (_comment_from_row, ("Id", "PostId")),
}


class _CountingStream:
    """Wraps a binary stream so parse errors can report a byte offset."""

    def __init__(self, raw: BinaryIO):
        self._raw = raw
        self.offset = 0

    def read(self, size: int = -1) -> bytes:
        chunk = self._raw.read(size)
        self.offset += len(chunk)
        return chunk


def parse_rows(
    kind: str,
    stream: BinaryIO,
    stats: ParseStats | None = None,
) -> Iterator[RawPost | RawUser | RawComment]:
    """Stream-parse one dump file, yielding one record per ``<row>``.

    ``kind`` is one of ``posts``, ``users``, ``comments``.  Rows missing a
    mandatory attribute are skipped and tallied in ``stats``; posts whose
    PostTypeId is neither question nor answer (wiki/moderator rows) are
    likewise skipped.  Unknown attributes are ignored.
    """
    if kind not in _ROW_DECODERS:
        raise ValueError(f"unknown dump kind: {kind!r}")
    decoder, mandatory = _ROW_DECODERS[kind]
    counting = _CountingStream(stream)
    if stats is None:
        stats = ParseStats()
    try:
        for event, elem in ET.iterparse(counting, events=("end",)):
            if elem.tag != "row":
                continue
            attrs = dict(elem.attrib)
            elem.clear()
            if any(key not in attrs for key in mandatory):
                stats.skipped += 1
                continue
            if kind == "posts" and int(attrs["PostTypeId"]) not in (
                POST_TYPE_QUESTION,
                POST_TYPE_ANSWER,
            ):
                stats.skipped += 1
                continue
            stats.parsed += 1
            yield decoder(attrs)
    except ET.ParseError as exc:
        raise DumpParseError(f"malformed XML: {exc}", counting.offset) from exc


class _BodyStripper(HTMLParser):
    """Splits post HTML into prose text and code blocks.

    ``<code>`` content, and ``<pre>`` content outside any ``<code>``, is
    collected as code; everything else becomes plain text with tags
    removed and entities decoded.
    """

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.text_parts: list[str] = []
        self.code_blocks: list[str] = []
        self._code_parts: list[str] = []
        self._code_depth = 0
        self._pre_depth = 0
        self._pre_is_code = False
        self._pre_saw_code = False
        self.p_tags = 0
        self.code_tags = 0

    def handle_starttag(self, tag: str, attrs) -> None:
        if tag == "p":
            self.p_tags += 1
        elif tag == "code":
            self.code_tags += 1
            if self._pre_is_code:
                self._pre_saw_code = True
            if self._code_depth == 0 and not self._pre_is_code:
                self._code_parts = []
            self._code_depth += 1
        elif tag == "pre":
            if self._pre_depth == 0 and self._code_depth == 0:
                self._pre_is_code = True
                self._pre_saw_code = False
                self._code_parts = []
            self._pre_depth += 1

    def handle_endtag(self, tag: str) -> None:
        if tag == "code" and self._code_depth > 0:
            self._code_depth -= 1
            if self._code_depth == 0 and not self._pre_is_code:
                self.code_blocks.append("".join(self._code_parts))
                self._code_parts = []
        elif tag == "pre" and self._pre_depth > 0:
            self._pre_depth -= 1
            if self._pre_depth == 0 and self._pre_is_code:
                self._pre_is_code = False
                if not self._pre_saw_code:
                    self.code_tags += 1  # bare <pre> counted as a code region
                self.code_blocks.append("".join(self._code_parts))
                self._code_parts = []

    def handle_data(self, data: str) -> None:
        if self._code_depth > 0 or self._pre_is_code:
            self._code_parts.append(data)
        else:
            self.text_parts.append(data)

    def flush(self) -> None:
        # unclosed code/pre at EOF: keep what we saw as a code block
        if self._code_parts:
            self.code_blocks.append("".join(self._code_parts))
            self._code_parts = []


def strip_html(body: str) -> StrippedBody:
    parser = _BodyStripper()
    try:
        parser.feed(body)
        parser.close()
    except Exception:
        pass  # best-effort recovery; never crash on bad markup
    parser.flush()
    return StrippedBody(
        text="".join(parser.text_parts),
        code_blocks=parser.code_blocks,
        p_tag_count=parser.p_tags,
        code_tag_count=parser.code_tags,
        raw_char_count=len(body),
    )


# --------------------------------------------------------------------------
# JSONL record store

_KIND_FILES = {"posts": "posts.jsonl", "users": "users.jsonl", "comments": "comments.jsonl"}
_KIND_TYPES = {"posts": RawPost, "users": RawUser, "comments": RawComment}


def write_store(kind: str, records: Iterable, store_dir: str | Path) -> int:
    """Append records to the per-kind JSONL file; returns the count written."""
    if kind not in _KIND_FILES:
        raise ValueError(f"unknown record kind: {kind!r}")
    store = Path(store_dir)
    try:
        store.mkdir(parents=True, exist_ok=True)
        count = 0
        with open(store / _KIND_FILES[kind], "a", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(asdict(rec), ensure_ascii=False, sort_keys=True))
                fh.write("\n")
                count += 1
        return count
    except OSError as exc:
        raise StoreError(f"cannot write store at {store}: {exc}") from exc


def scan_store(kind: str, store_dir: str | Path) -> Iterator[RawPost | RawUser | RawComment]:
    """Yield records of one kind in stored order; missing file yields nothing."""
    path = Path(store_dir) / _KIND_FILES[kind]
    if not path.exists():
        return
    rec_type = _KIND_TYPES[kind]
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield rec_type(**json.loads(line))


@dataclass
class Store:
    """In-memory view over an ingested store directory.

    Answers whose parent question is absent are kept but flagged as
    orphans; they are reported, never silently dropped.
    """

    posts: dict[int, RawPost] = field(default_factory=dict)
    users: dict[int, RawUser] = field(default_factory=dict)
    answers_of: dict[int, list[int]] = field(default_factory=dict)
    orphan_answer_ids: list[int] = field(default_factory=list)

    @classmethod
    def load(cls, store_dir: str | Path) -> "Store":
        store = cls()
        for post in scan_store("posts", store_dir):
            store.posts[post.id] = post
        for user in scan_store("users", store_dir):
            store.users[user.id] = user
        for post in store.posts.values():
            if post.post_type != POST_TYPE_ANSWER:
                continue
            parent = store.posts.get(post.parent_id) if post.parent_id else None
            if parent is None or parent.post_type != POST_TYPE_QUESTION:
                store.orphan_answer_ids.append(post.id)
            else:
                store.answers_of.setdefault(post.parent_id, []).append(post.id)
        return store

    def questions(self) -> Iterator[RawPost]:
        for post in self.posts.values():
            if post.post_type == POST_TYPE_QUESTION:
                yield post

    def question_with_answers(self, question_id: int) -> tuple[RawPost, list[RawPost]]:
        """The question plus its answers sorted by descending score, ties by id."""
        post = self.posts.get(question_id)
        if post is None:
            raise StoreError(f"no post with id {question_id}")
        if post.post_type != POST_TYPE_QUESTION:
            raise StoreError(f"post {question_id} is not a question")
        answers = [self.posts[a] for a in self.answers_of.get(question_id, [])]
        answers.sort(key=lambda a: (-a.score, a.id))
        return post, answers
