"""How events become neighbors, and what the inter-event module sees.

Two events are linked when they share context nodes: enough shared nodes
makes them positive neighbors, few enough makes them negatives.  Each
event is then summarized by a type-keyed attention over its context plus
its center, and neighbor compatibility is a bilinear score on those
summaries.  A hand-built five-event network keeps every set inspectable.
"""

import numpy as np

from evad.data import Ahin, Event, EventDataset
from evad.encoder import encode_all, init_params
from evad.inter_event import (
    build_neighbor_sets,
    event_representation,
    load_neighbor_sets,
)
from evad.numerics import activation_pair

# ---------------------------------------------------------------------------
# five events over a shared pool of users; overlap is easy to read off
# ---------------------------------------------------------------------------
rng = np.random.default_rng(0)
n_centers, n_users = 5, 8
types = ["center"] * n_centers + ["user"] * n_users
features = rng.normal(size=(n_centers + n_users, 4))
ahin = Ahin(np.arange(n_centers + n_users), types, features, "center")

U = n_centers  # first user node
events = [
    Event(0, 0, (U + 0, U + 1, U + 2)),
    Event(1, 1, (U + 1, U + 2, U + 3)),   # shares two users with event 0
    Event(2, 2, (U + 2, U + 3, U + 4)),   # shares two users with event 1
    Event(3, 3, (U + 5, U + 6)),          # disjoint from events 0 and 4
    Event(4, 4, (U + 0, U + 6, U + 7)),
]
dataset = EventDataset(ahin, events)

# ---------------------------------------------------------------------------
# neighbor sets: positives share more than t_pos nodes, negatives fewer
# than t_neg
# ---------------------------------------------------------------------------
ns = build_neighbor_sets(dataset, t_pos=1, t_neg=1)
for i in range(dataset.m):
    print(f"event {i}: positives {ns.positives_of(i).tolist()}, "
          f"negatives {ns.negatives_of(i).tolist()}")

# the scan is O(m^2); a cache file skips it on reruns
ns.save("/tmp/neighbors.tsv", [ev.event_id for ev in dataset.events])
again = load_neighbor_sets("/tmp/neighbors.tsv", dataset, t_pos=1, t_neg=1)
print("cache round trip:",
      all(np.array_equal(ns.positives_of(i), again.positives_of(i))
          for i in range(dataset.m)))

# ---------------------------------------------------------------------------
# the event representation: attention weights over context, keyed by type
# ---------------------------------------------------------------------------
params = init_params(ahin, d=6, seed=1)
act, act_grad = activation_pair("elu")
cache = encode_all(ahin, params)
rep = event_representation(events[0], cache, ahin, params, act, act_grad)
print("attention over context of event 0:",
      np.round(rep.alpha, 3).tolist(), "(sums to 1)")
print(f"representation = context summary + center embedding, "
      f"length {rep.e.shape[0]} = 2 x {params['W_center'].shape[0]}")
