import numpy as np
import pytest

from idclean import SynthSpec, generate


@pytest.fixture(scope="session")
def planted():
    """Default planted-noise fixture: 100 clusters, 3 contaminated, seed 7."""
    manifest, embeddings, truth = generate(SynthSpec(seed=7))
    return manifest, embeddings, truth


def random_manifest_rows(rng, n_identities, size_lo, size_hi, dim):
    """Random (manifest, embeddings) pair with float32 standard-normal rows."""
    from idclean import EmbeddingMatrix, SampleRecord, build_manifest

    records = []
    row = 0
    sizes = rng.integers(size_lo, size_hi + 1, size=n_identities)
    for idx in range(n_identities):
        ident = f"p{idx:05d}"
        for k in range(int(sizes[idx])):
            records.append(SampleRecord(f"{ident}_s{k:03d}", ident, f"{ident}/{k}.jpg", row))
            row += 1
    values = rng.standard_normal((row, dim)).astype(np.float32)
    return build_manifest(records), EmbeddingMatrix.from_array(values)
