import hashlib
import socket
import threading

import numpy as np
import pytest

from streamnerf.camera import CameraIntrinsics
from streamnerf.publisher import ConnectionLost, parse_hostport, replay, schedule, synthesize
from streamnerf.scene import default_scene
from streamnerf.trajectory import HelicalSpec
from streamnerf.wire import TAG_CAMERA_INFO, TAG_IMAGE, TAG_POSE, CameraInfoMessage, iter_socket_messages

CAM = CameraIntrinsics(8.0, 8.0, 4.0, 4.0, 8, 8)


@pytest.fixture(scope="module")
def ds():
    return synthesize(default_scene(), HelicalSpec(count=100), CAM)


class Receiver(threading.Thread):
    def __init__(self):
        super().__init__(daemon=True)
        self.server = socket.create_server(("127.0.0.1", 0))
        self.address = self.server.getsockname()
        self.messages = []

    def run(self):
        conn, _ = self.server.accept()
        with conn:
            self.messages = list(iter_socket_messages(conn))
        self.server.close()


def test_parse_hostport():
    assert parse_hostport("127.0.0.1:7011") == ("127.0.0.1", 7011)
    with pytest.raises(ValueError):
        parse_hostport("localhost")


def test_schedule_order_and_jitter(ds):
    events = schedule(ds, 20.0, jitter_ms=-5)
    assert isinstance(events[0][2], CameraInfoMessage)
    # negative jitter puts each image ahead of its pose
    assert type(events[1][2]).__name__ == "ImageMessage"
    assert events[1][0] == pytest.approx(0.0)
    assert events[2][0] == pytest.approx(0.005)


def test_replay_pacing_and_content(ds):
    rx = Receiver()
    rx.start()
    summary = replay(ds, 20.0, rx.address)
    rx.join(5)
    # 100 frames at 20 Hz: last frame leaves at 99/20 s
    assert abs(summary.wall_s - 4.95) <= 0.495
    assert summary.frames_sent == 100
    assert len(rx.messages) == 201
    assert isinstance(rx.messages[0], CameraInfoMessage)
    stamps = [m.stamp.to_ns() for m in rx.messages[1::2]]
    assert stamps == sorted(stamps)
    assert np.array_equal(rx.messages[2].to_array(), ds.images[0])


def test_replay_is_deterministic(ds):
    runs = []
    for _ in range(2):
        rx = Receiver()
        rx.start()
        summary = replay(ds, 1000.0, rx.address, holdout_every=10)
        rx.join(5)
        runs.append(summary.sent)
    assert runs[0] == runs[1]
    tags = [tag for _, tag, _ in runs[0]]
    assert tags[0] == TAG_CAMERA_INFO and tags.count(TAG_POSE) == tags.count(TAG_IMAGE) == 90


def test_replay_stall(ds):
    rx = Receiver()
    rx.start()
    summary = replay(ds, 1000.0, rx.address, stall_after=10, stall_s=0.5)
    rx.join(5)
    assert summary.wall_s >= 0.5
    assert summary.frames_sent == 100


def test_connection_lost(ds):
    server = socket.create_server(("127.0.0.1", 0))
    addr = server.getsockname()

    def accept_and_close():
        conn, _ = server.accept()
        conn.recv(4096)
        conn.setsockopt(socket.SOL_SOCKET, socket.SO_LINGER, b"\x01\x00\x00\x00\x00\x00\x00\x00")
        conn.close()
        server.close()

    threading.Thread(target=accept_and_close, daemon=True).start()
    with pytest.raises(ConnectionLost) as info:
        replay(ds, 100.0, addr)
    assert info.value.frames_sent < 100
