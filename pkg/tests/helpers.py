"""Small builders shared by the test modules."""

from surveymirror.survey import Respondent, ResponseMatrix, load_study_spec


def two_path_spec(k=4, scale=(1, 7)):
    """X1 -> Y and X2 -> Y with ``k`` indicators per block."""
    latents = [
        {"name": n, "role": r, "items": [{"id": f"{n}_{i}", "text": f"{n} statement {i}"} for i in range(1, k + 1)]}
        for n, r in (("X1", "factor"), ("X2", "factor"), ("Y", "outcome"))
    ]
    return load_study_spec({
        "name": f"two_path_{k}",
        "scale": {"min": scale[0], "max": scale[1]},
        "latents": latents,
        "paths": [{"from": "X1", "to": "Y"}, {"from": "X2", "to": "Y"}],
        "demographics": [],
    })


def tiny_spec(n_items=2, scale=(1, 7)):
    """One latent with ``n_items`` items, no paths; for metric tests."""
    return load_study_spec({
        "name": "tiny",
        "scale": {"min": scale[0], "max": scale[1]},
        "latents": [{"name": "A", "role": "outcome",
                     "items": [{"id": f"Q{i}", "text": f"question {i}"} for i in range(1, n_items + 1)]}],
        "paths": [],
        "demographics": [],
    })


def matrix(spec, rows, ids=None):
    items = spec.item_ids
    ids = ids or [f"r{k}" for k in range(len(rows))]
    return ResponseMatrix(spec, tuple(Respondent(i, {}, dict(zip(items, row))) for i, row in zip(ids, rows)))
