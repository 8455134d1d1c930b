"""Uniform access to the model being explained.

Every model exposes ``predict_proba`` on a batch of instances; labels and
confidences are derived from it with :func:`records`.
"""

import json
import selectors
import subprocess
import threading
import time
from dataclasses import dataclass

import numpy as np

from .dataset import pairwise_distances
from .errors import (EmptyInput, KTooLarge, ModelTimeout, NoLabels, ProcessSpawnError,
                     ProtocolError)

PROBA_TOL = 1e-6


@dataclass(frozen=True)
class PredictionRecord:
    label: int
    confidence: float
    proba: tuple


def records(proba):
    """Turn an (n, C) probability matrix into PredictionRecords.

    ``np.argmax`` returns the first maximum, so ties go to the lowest class.
    """
    proba = np.atleast_2d(np.asarray(proba, dtype=float))
    labels = np.argmax(proba, axis=1)
    return [PredictionRecord(int(l), float(p[l]), tuple(float(v) for v in p))
            for l, p in zip(labels, proba)]


def check_proba(proba, n_rows, n_classes=None):
    proba = np.asarray(proba, dtype=float)
    if proba.ndim != 2 or proba.shape[0] != n_rows:
        raise ProtocolError(f"expected {n_rows} probability vectors, got shape {proba.shape}")
    if n_classes is not None and proba.shape[1] != n_classes:
        raise ProtocolError(f"expected {n_classes} classes, got {proba.shape[1]}")
    if not np.all(np.isfinite(proba)) or np.any(proba < 0):
        raise ProtocolError("probabilities must be finite and nonnegative")
    if np.any(np.abs(proba.sum(axis=1) - 1.0) > PROBA_TOL):
        raise ProtocolError("probabilities must sum to 1")
    return proba


class BlackBoxModel:
    """Behavioral interface: subclasses implement ``predict_proba``."""

    n_classes = None

    def predict_proba(self, X):
        raise NotImplementedError

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def records(self, X):
        return records(self.predict_proba(X))


class FunctionModel(BlackBoxModel):
    """Wrap any callable mapping an (n, d) array to an (n, C) probability array."""

    def __init__(self, fn, n_classes):
        self.fn = fn
        self.n_classes = n_classes

    def predict_proba(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return check_proba(self.fn(X), X.shape[0], self.n_classes)


class KNNModel(BlackBoxModel):
    """Class frequencies among the k nearest training rows (scaled euclidean).

    When several rows tie at the k-th distance they share the remaining
    votes equally, so the result does not depend on training-row order.
    """

    def __init__(self, train, k):
        if train.y_true is None:
            raise NoLabels("knn_model needs a labeled training set")
        if not 1 <= k <= len(train):
            raise KTooLarge(f"k={k} but training set has {len(train)} rows")
        self.train = train
        self.k = int(k)
        self.n_classes = max(len(train.schema.class_names), int(train.y_true.max()) + 1)
        self._Xs = train.scale(train.X)
        self._onehot = np.eye(self.n_classes)[train.y_true]
        self._sq = np.einsum("ij,ij->i", self._Xs, self._Xs)
        self._sq_max = float(self._sq.max())

    def predict_proba(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Q = self.train.scale(X)
        n, k = self._Xs.shape[0], self.k
        if k == n:
            return np.tile(self._onehot.mean(axis=0), (Q.shape[0], 1))
        out = np.empty((Q.shape[0], self.n_classes))
        step = max(1, 4_000_000 // max(1, n * self._Xs.shape[1]))
        for s in range(0, Q.shape[0], step):
            q = Q[s:s + step]
            out[s:s + step] = self._vote(q)
        return out

    def _vote(self, q):
        """Fast squared-distance vote; rows near a k-th place tie are redone exactly."""
        k = self.k
        qq = np.einsum("ij,ij->i", q, q)
        sq = qq[:, None] + self._sq[None, :] - 2.0 * (q @ self._Xs.T)
        part = np.partition(sq, k, axis=1)
        kth = part[:, :k].max(axis=1)
        # rounding error of the expanded form is bounded by a few ulps of the norms
        guard = 1e-9 * (qq + self._sq_max + 1.0)
        near = part[:, k] - kth <= guard
        out = ((sq <= kth[:, None]) @ self._onehot) / k
        if np.any(near):
            out[near] = self._vote_exact(q[near])
        return out

    def _vote_exact(self, q):
        D = pairwise_distances(q, self._Xs)
        kth = np.partition(D, self.k - 1, axis=1)[:, self.k - 1:self.k]
        tol = 1e-12 * np.maximum(1.0, kth)
        closer = D < kth - tol
        tied = np.abs(D - kth) <= tol
        remaining = self.k - closer.sum(axis=1, keepdims=True)
        w = closer + tied * (remaining / tied.sum(axis=1, keepdims=True))
        return (w @ self._onehot) / self.k


def knn_model(train, k):
    return KNNModel(train, k)


class SubprocessModel(BlackBoxModel):
    """Client for a child process speaking the line-delimited JSON protocol.

    Requests ``{"op": "predict_proba", "instances": [[...], ...]}`` and
    expects ``{"proba": [[...], ...]}`` back; ``{"op": "schema"}`` is sent
    once on start-up and must answer ``{"n_features": N, "n_classes": C}``.
    Access to the child is serialized with a lock.
    """

    def __init__(self, command, timeout=30.0):
        self.command = command
        self.timeout = timeout
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                command, shell=isinstance(command, str), stdin=subprocess.PIPE,
                stdout=subprocess.PIPE, text=True, bufsize=1)
        except OSError as exc:
            raise ProcessSpawnError(f"cannot start {command!r}: {exc}") from exc
        self._selector = selectors.DefaultSelector()
        self._selector.register(self._proc.stdout, selectors.EVENT_READ)
        schema = self._request({"op": "schema"})
        try:
            self.n_features = int(schema["n_features"])
            self.n_classes = int(schema["n_classes"])
        except (KeyError, TypeError, ValueError):
            self.close()
            raise ProtocolError(f"bad schema response: {schema!r}") from None

    def _readline(self):
        deadline = time.monotonic() + self.timeout
        while True:
            left = deadline - time.monotonic()
            if left <= 0 or not self._selector.select(timeout=left):
                raise ModelTimeout(f"no response within {self.timeout} s")
            line = self._proc.stdout.readline()
            if line == "":
                raise ProtocolError("child process closed its output")
            if line.strip():
                return line

    def _request(self, payload):
        with self._lock:
            if self._proc.poll() is not None:
                raise ProcessSpawnError(f"child exited with status {self._proc.returncode}")
            try:
                self._proc.stdin.write(json.dumps(payload) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ProcessSpawnError(f"cannot write to child: {exc}") from exc
            line = self._readline()
        try:
            reply = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"malformed line from child: {line.strip()!r}") from None
        if not isinstance(reply, dict):
            raise ProtocolError(f"malformed line from child: {line.strip()!r}")
        return reply

    def predict_proba(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ProtocolError(f"model expects {self.n_features} features, got {X.shape[1]}")
        reply = self._request({"op": "predict_proba", "instances": X.tolist()})
        if "proba" not in reply:
            raise ProtocolError(f"response lacks 'proba': {reply!r}")
        return check_proba(reply["proba"], X.shape[0], self.n_classes)

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._selector.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def subprocess_model(command, timeout=30.0):
    return SubprocessModel(command, timeout=timeout)


def confidence_threshold(preds):
    """Mean confidence minus one population standard deviation, clamped to [0, 1]."""
    conf = np.array([p.confidence if isinstance(p, PredictionRecord) else float(p)
                     for p in preds], dtype=float)
    if conf.size == 0:
        raise EmptyInput("confidence_threshold needs at least one prediction")
    # centered form of E[P^2] - E[P]^2; avoids cancellation when spread is tiny
    mean = conf.mean()
    std = np.sqrt(np.mean((conf - mean) ** 2))
    return float(min(1.0, max(0.0, mean - std)))
