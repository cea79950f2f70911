"""Clients and local stand-ins for the external model services.

Image services speak PNG over HTTP: the request body is the PNG, the
transform name and its parameters travel as query arguments, and the
response body is the transformed PNG. JSON services (property estimation,
VLM verdicts, aesthetic scores) take ``{"images": [base64 PNG], ...}`` and
answer with a flat JSON object.
"""

from __future__ import annotations

import base64
import json
import logging
import os

import numpy as np
import requests

from .errors import InputError, ServiceError
from .fileio import decode_png, encode_png

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0


def post_with_retry(url, *, timeout=DEFAULT_TIMEOUT, retries=1, session=None, **kwargs):
    """POST, retrying on connection errors, timeouts and 5xx replies."""
    http = session or requests
    attempts = []
    for attempt in range(retries + 1):
        try:
            resp = http.post(url, timeout=timeout, **kwargs)
        except requests.RequestException as exc:
            attempts.append(f"{type(exc).__name__}: {exc}")
            log.warning("POST %s failed (attempt %d): %s", url, attempt + 1, exc)
            continue
        if resp.status_code >= 500:
            attempts.append(f"HTTP {resp.status_code}: {resp.text[:200]}")
            continue
        if resp.status_code >= 400:
            raise ServiceError(
                f"{url} rejected the request with HTTP {resp.status_code}",
                diagnostics={"url": url, "status": resp.status_code, "body": resp.text[:500]},
            )
        return resp
    raise ServiceError(
        f"{url} unreachable after {retries + 1} attempt(s)",
        diagnostics={"url": url, "attempts": attempts},
    )


class ImageTransformService:
    """Maps an HxWx3 float image in [0, 1] to a transformed image."""

    name = "base"

    def transform(self, image, transform, params=None):
        raise NotImplementedError


class IdentityService(ImageTransformService):
    name = "identity"

    def transform(self, image, transform, params=None):
        return image


class ScaleService(ImageTransformService):
    """Multiplies intensities by a constant; a stand-in for tone changes."""

    name = "scale"

    def __init__(self, factor):
        self.factor = float(factor)

    def transform(self, image, transform, params=None):
        return np.clip(np.asarray(image) * self.factor, 0.0, 1.0)


class NearestUpscaleService(ImageTransformService):
    """Pixel replication by ``params["upscale"] = (sx, sy)``."""

    name = "nearest"

    def transform(self, image, transform, params=None):
        sx, sy = (params or {}).get("upscale", (1, 1))
        return np.repeat(np.repeat(np.asarray(image), int(sy), axis=0), int(sx), axis=1)


class HttpImageService(ImageTransformService):
    name = "http"

    def __init__(self, endpoint, timeout=DEFAULT_TIMEOUT, retries=1, session=None):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.session = session

    def transform(self, image, transform, params=None):
        resp = post_with_retry(
            self.endpoint,
            timeout=self.timeout,
            retries=self.retries,
            session=self.session,
            params={"transform": transform, "params": json.dumps(params or {}, sort_keys=True)},
            data=encode_png(image),
            headers={"Content-Type": "image/png"},
        )
        try:
            return decode_png(resp.content)
        except Exception as exc:
            raise ServiceError(
                f"{self.endpoint} returned an undecodable image",
                diagnostics={"url": self.endpoint, "error": str(exc)},
            ) from None


def b64_png(image):
    return base64.b64encode(encode_png(image)).decode("ascii")


class JsonServiceClient:
    """POSTs JSON and returns the decoded object reply.

    The API key, if any, is read from the environment at call time and
    sent as a bearer token.
    """

    def __init__(self, endpoint, api_key_env=None, timeout=DEFAULT_TIMEOUT, retries=1, session=None):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.retries = retries
        self.session = session

    def post(self, payload):
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        resp = post_with_retry(
            self.endpoint,
            timeout=self.timeout,
            retries=self.retries,
            session=self.session,
            data=json.dumps(payload),
            headers=headers,
        )
        try:
            body = resp.json()
        except ValueError:
            raise ServiceError(
                f"{self.endpoint} returned non-JSON content",
                diagnostics={"url": self.endpoint, "body": resp.text[:500]},
            ) from None
        if not isinstance(body, dict):
            raise ServiceError(f"{self.endpoint} returned {type(body).__name__}, expected an object")
        return body


def image_service_from_config(cfg):
    """Build an image service from ``{"mode": ..., ...}``; ``None`` means identity."""
    cfg = cfg or {}
    mode = cfg.get("mode", "identity")
    if mode == "identity":
        return IdentityService()
    if mode == "nearest":
        return NearestUpscaleService()
    if mode == "scale":
        return ScaleService(cfg.get("factor", 1.0))
    if mode == "http":
        if not cfg.get("endpoint"):
            raise InputError("http image service needs an 'endpoint'")
        return HttpImageService(cfg["endpoint"], cfg.get("timeout", DEFAULT_TIMEOUT), cfg.get("retries", 1))
    raise InputError(f"unknown image service mode {mode!r}")
