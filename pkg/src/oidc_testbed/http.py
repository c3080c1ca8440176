"""In-memory HTTP records.  No sockets; actors exchange these objects."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional
from urllib.parse import parse_qsl, urlencode, urlsplit, urlunsplit

from .protocol import ChannelSecurity


@dataclass(frozen=True)
class SetCookie:
    name: str
    value: str
    secure: bool = True


@dataclass
class HttpRequest:
    method: str
    url: str
    body: dict = field(default_factory=dict)
    cookies: dict = field(default_factory=dict)
    headers: dict = field(default_factory=dict)

    def __post_init__(self):
        if "#" in self.url:
            raise ValueError("fragments never leave the browser")

    @property
    def channel(self) -> ChannelSecurity:
        return ChannelSecurity.of_url(self.url)

    @property
    def host(self) -> str:
        return urlsplit(self.url).netloc

    @property
    def path(self) -> str:
        return urlsplit(self.url).path or "/"

    @property
    def query(self) -> dict:
        return dict(parse_qsl(urlsplit(self.url).query, keep_blank_values=True))

    def params(self) -> dict:
        """Query fields merged with body fields (body wins)."""
        return {**self.query, **self.body}


@dataclass
class HttpResponse:
    status: int = 200
    body: dict = field(default_factory=dict)
    headers: dict = field(default_factory=dict)
    set_cookies: list = field(default_factory=list)
    # Scripted content the browser may act on (forms, postMessage documents).
    page: Optional[Any] = None

    @property
    def location(self) -> Optional[str]:
        return self.headers.get("Location")


def redirect(location: str, **kw) -> HttpResponse:
    return HttpResponse(302, headers={"Location": location}, **kw)


def with_query(url: str, params: dict) -> str:
    parts = urlsplit(url)
    query = "&".join(q for q in (parts.query, urlencode(params)) if q)
    return urlunsplit((parts.scheme, parts.netloc, parts.path, query, ""))


def with_fragment(url: str, params: dict) -> str:
    parts = urlsplit(url)
    return urlunsplit((parts.scheme, parts.netloc, parts.path, parts.query, urlencode(params)))


def split_fragment(url: str) -> tuple:
    """``(url_without_fragment, fragment_fields)``."""
    parts = urlsplit(url)
    bare = urlunsplit((parts.scheme, parts.netloc, parts.path, parts.query, ""))
    return bare, dict(parse_qsl(parts.fragment))
