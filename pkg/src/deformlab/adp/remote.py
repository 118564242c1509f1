"""Remote vision-endpoint judge.

Wire protocol: HTTP POST of ``{"prompt": text, "images": [b64 PGM, b64
PGM]}``; the response body is plain text from which the LAST occurrence
of "ANSWER: YES" / "ANSWER: NO" wins. Transport failures retry with
exponential backoff; a response with neither token is a
MalformedAnswer, which the policy wrapper converts to a conservative NO.
"""

from __future__ import annotations

import base64
import threading
import time
from dataclasses import dataclass

import requests

from . import NO_TOKEN, YES_TOKEN, JudgmentContext, PromptTemplate, Verdict


class RemoteUnavailable(RuntimeError):
    """Endpoint unreachable after all retries."""


class MalformedAnswer(ValueError):
    """Response contained neither answer token."""

    def __init__(self, text: str):
        super().__init__(f"no answer token in response ({len(text)} chars)")
        self.text = text


@dataclass(frozen=True)
class RemoteConfig:
    url: str
    timeout: float = 30.0
    retries: int = 3
    backoff_base: float = 1.0
    model: str | None = None


def parse_answer(text: str) -> bool:
    """Last answer token wins; raises MalformedAnswer when neither appears."""
    yes = text.rfind(YES_TOKEN)
    no = text.rfind(NO_TOKEN)
    if yes < 0 and no < 0:
        raise MalformedAnswer(text)
    return yes > no


def _post_with_retries(cfg: RemoteConfig, payload: dict, session: requests.Session) -> str:
    last_err = None
    for attempt in range(cfg.retries):
        try:
            resp = session.post(cfg.url, json=payload, timeout=cfg.timeout)
            if resp.status_code >= 500:
                raise requests.RequestException(f"server error {resp.status_code}")
            resp.raise_for_status()
            return resp.text
        except requests.RequestException as err:
            last_err = err
            if attempt < cfg.retries - 1:
                time.sleep(cfg.backoff_base * (2**attempt))
    raise RemoteUnavailable(f"{cfg.url}: {last_err}")


def judge_remote(
    raw_image: bytes,
    overlay_image: bytes,
    template: PromptTemplate,
    cfg: RemoteConfig,
    session: requests.Session | None = None,
) -> Verdict:
    """One round trip; raises RemoteUnavailable / MalformedAnswer."""
    prompt = template.build_prompt()
    payload = {
        "prompt": prompt,
        "images": [
            base64.b64encode(raw_image).decode("ascii"),
            base64.b64encode(overlay_image).decode("ascii"),
        ],
    }
    if cfg.model:
        payload["model"] = cfg.model
    text = _post_with_retries(cfg, payload, session or requests.Session())
    recognizable = parse_answer(text)  # may raise MalformedAnswer
    return Verdict(
        recognizable=recognizable,
        reasoning=text.strip(),
        source="remote",
        prompt=prompt,
        raw_response=text,
    )


class RemotePolicy:
    """Judges via the remote endpoint; one HTTP session per worker thread."""

    name = "remote"

    def __init__(self, cfg: RemoteConfig, template: PromptTemplate):
        self.cfg = cfg
        self.template = template
        self._local = threading.local()

    def _session(self) -> requests.Session:
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def judge(self, ctx: JudgmentContext) -> Verdict:
        raw = ctx.obs.mask_pgm()
        overlay = ctx.overlay.to_pgm()
        try:
            return judge_remote(raw, overlay, self.template, self.cfg, self._session())
        except MalformedAnswer as err:
            return Verdict(
                recognizable=False,
                reasoning="malformed answer treated as NO",
                source="remote",
                prompt=self.template.build_prompt(),
                raw_response=err.text,
            )
