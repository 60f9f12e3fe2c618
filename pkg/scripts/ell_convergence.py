"""Value at alpha = 1 + 2^-ell against ell, next to the alpha = 1 oracle (depolarizing and semicausal erasure)."""

import argparse

from unext.oracle import depolarizing_bs, semicausal_erasure_bs
from unext.quantum import make_depolarizing, make_semicausal_erasure
from unext.sdp import unext_alpha_bipartite


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=0.1)
    ap.add_argument("--max-ell", type=int, default=10)
    args = ap.parse_args()
    cases = [("depolarizing d=2", make_depolarizing(2, args.p), depolarizing_bs(2, args.p).value_bits),
             ("semicausal erasure d=2", make_semicausal_erasure(2, args.p), semicausal_erasure_bs(2, args.p).value_bits)]
    print("channel,ell,alpha,value_bits,oracle_bits,gap")
    for name, ch, oracle in cases:
        for ell in range(args.max_ell + 1):
            r = unext_alpha_bipartite(ch, ell)
            print(f"{name},{ell},{r.alpha:.6g},{r.value_bits:.8f},{oracle:.8f},{r.value_bits - oracle:.2e}")


if __name__ == "__main__":
    main()
