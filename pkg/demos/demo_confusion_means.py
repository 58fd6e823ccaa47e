"""
G-mean and H-mean under class imbalance
=======================================

Confusion matrices whose entries fall off by a factor of 3 stand in for
imbalanced classes. The harmonic aggregate stays above the geometric one.
"""
from pcgoo.objectives import figure_means

print(f"{'L':>3} {'G bal':>7} {'H bal':>7} {'G geo':>7} {'H geo':>7} {'G sym':>7} {'H sym':>7}")
for r in figure_means(10):
    print(f"{r['L']:>3} {r['gmean_balanced']:7.4f} {r['hmean_balanced']:7.4f} "
          f"{r['gmean_geometric']:7.4f} {r['hmean_geometric']:7.4f} {r['gmean_symmetric']:7.4f} {r['hmean_symmetric']:7.4f}")
