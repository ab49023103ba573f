import pytest

from swipesim.domain import BitrateLadder, Manifest, VideoSpec


@pytest.fixture
def ladder124():
    return BitrateLadder((1.0, 2.0, 4.0))


@pytest.fixture
def two_video_manifest(ladder124):
    return Manifest(
        videos=(
            VideoSpec(id="a", duration_s=10.0, chunk_duration_s=5.0),
            VideoSpec(id="b", duration_s=10.0, chunk_duration_s=5.0),
        ),
        ladder=ladder124,
    )


def make_manifest(num_chunks_per_video, chunk_duration_s=5.0, ladder=None):
    """Playlist where video k has exactly num_chunks_per_video[k] chunks."""
    videos = tuple(
        VideoSpec(
            id=f"v{k + 1}",
            duration_s=n * chunk_duration_s,
            chunk_duration_s=chunk_duration_s,
        )
        for k, n in enumerate(num_chunks_per_video)
    )
    return Manifest(videos=videos, ladder=ladder or BitrateLadder((1.0, 2.0, 4.0)))
