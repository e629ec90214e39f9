"""Wire client for a hosted vision-language annotator.

Speaks the OpenAI-compatible chat-completions protocol: a POST carrying a
model name and a message list whose content interleaves text with
base64-encoded PNG frames. Endpoint and API key come from the
KOI_VLM_ENDPOINT and KOI_VLM_API_KEY environment variables. Prompt
templates are plain text files shipped with the package and editable in
place. Nothing in the automated pipeline requires this client; the
scripted oracle covers every test.
"""

from __future__ import annotations

import base64
import json
import os
import re
import time
from importlib import resources

import cv2
import httpx
import numpy as np

from .semantic import Annotator, AnnotatorFormatError, QuerySet, SubgoalList

ENDPOINT_VAR = "KOI_VLM_ENDPOINT"
API_KEY_VAR = "KOI_VLM_API_KEY"

DECOMPOSE_TEMPLATE = "decompose_task.txt"
SELECT_TEMPLATE = "select_keystates.txt"


def load_prompt(name: str) -> str:
    return resources.files("koi.prompts").joinpath(name).read_text()


def frame_to_png_b64(frame: np.ndarray) -> str:
    u8 = np.clip(np.rint(np.asarray(frame, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    ok, buf = cv2.imencode(".png", u8)
    if not ok:
        raise AnnotatorFormatError("failed to encode frame as PNG")
    return base64.b64encode(buf.tobytes()).decode("ascii")


class VlmAnnotator(Annotator):
    def __init__(
        self,
        model: str,
        endpoint: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        min_request_interval: float = 0.0,
        transport: httpx.BaseTransport | None = None,
        clock=time,
    ):
        self.model = model
        self.endpoint = endpoint or os.environ.get(ENDPOINT_VAR)
        self.api_key = api_key or os.environ.get(API_KEY_VAR)
        if not self.endpoint:
            raise AnnotatorFormatError(f"no endpoint: set {ENDPOINT_VAR} or pass endpoint=")
        if not self.api_key:
            raise AnnotatorFormatError(f"no API key: set {API_KEY_VAR} or pass api_key=")
        self.min_request_interval = min_request_interval
        self._clock = clock
        self._last_request = -float("inf")
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _post(self, messages) -> str:
        # request-rate ceiling: keep a minimum spacing between POSTs
        wait = self.min_request_interval - (self._clock.monotonic() - self._last_request)
        if wait > 0:
            self._clock.sleep(wait)
        payload = {"model": self.model, "messages": messages}
        response = self._client.post(
            self.endpoint,
            json=payload,
            headers={"Authorization": f"Bearer {self.api_key}"},
        )
        self._last_request = self._clock.monotonic()
        response.raise_for_status()
        body = response.json()
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise AnnotatorFormatError(
                f"reply missing choices[0].message.content: {exc}", raw=body
            ) from exc

    def decompose(self, task_description: str) -> list[str]:
        prompt = load_prompt(DECOMPOSE_TEMPLATE).format(task_description=task_description)
        content = self._post([{"role": "user", "content": prompt}])
        subgoals = []
        for line in content.splitlines():
            m = re.match(r"\s*\d+[.)]\s*(.+?)\s*$", line)
            if m:
                subgoals.append(m.group(1))
        if not subgoals:
            raise AnnotatorFormatError(
                "decomposition reply contained no numbered subgoals", raw=content
            )
        return subgoals

    def select_keystates(self, query: QuerySet, subgoals: SubgoalList) -> list[int]:
        subgoal_list = "\n".join(
            f"{i + 1}. {text}" for i, text in enumerate(subgoals.subgoals)
        )
        prompt = load_prompt(SELECT_TEMPLATE).format(
            subgoal_list=subgoal_list,
            frame_count=len(query.indices),
            task_description=subgoals.task_description,
        )
        content: list[dict] = [{"type": "text", "text": prompt}]
        for idx, frame in zip(query.indices, query.frames):
            content.append({"type": "text", "text": f"Frame at time step {idx}:"})
            content.append(
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:image/png;base64,{frame_to_png_b64(frame)}"},
                }
            )
        reply = self._post([{"role": "user", "content": content}])
        m = re.search(r"\[[^\]]*\]", reply)
        if not m:
            raise AnnotatorFormatError("reply contains no JSON array of indices", raw=reply)
        try:
            indices = json.loads(m.group(0))
            return [int(i) for i in indices]
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise AnnotatorFormatError(f"unparseable index array: {exc}", raw=reply) from exc

    def close(self):
        self._client.close()
