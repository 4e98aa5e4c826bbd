from fractions import Fraction as F
import math
import numpy as np
from statsmodels.stats.inter_rater import fleiss_kappa as sm_kappa

def fleiss(table):
    N=len(table); n=sum(table[0]); k=len(table[0])
    M=N*n
    p=[F(sum(r[j] for r in table),M) for j in range(k)]
    P=[F(sum(x*(x-1) for x in r), n*(n-1)) for r in table]
    Pbar=sum(P)/N
    Pe=sum(pj*pj for pj in p)
    kappa=(Pbar-Pe)/(1-Pe)
    s1=sum(pj*(1-pj) for pj in p)
    s2=sum(pj*(1-pj)*((1-pj)-pj) for pj in p)
    se=math.sqrt(2)/(float(s1)*math.sqrt(N*n*(n-1)))*math.sqrt(float(s1*s1-s2))
    cats=[]
    for j in range(k):
        if p[j]==0 or p[j]==1: cats.append(None); continue
        kj=1-F(sum(r[j]*(n-r[j]) for r in table), N*n*(n-1)*p[j]*(1-p[j]))
        cats.append(float(kj))
    return float(Pbar),float(Pe),float(kappa),se,cats

tables={
 "A":[[3,0,0],[2,1,0],[0,3,0],[1,1,1],[0,2,1],[3,0,0],[1,2,0],[0,0,3],[2,0,1],[0,3,0]],
 "B":[[5,0,0],[4,1,0],[3,2,0],[2,2,1],[0,5,0],[1,4,0],[0,4,1],[5,0,0]],
}
for name,t in tables.items():
    Pbar,Pe,k,se,cats=fleiss(t)
    print(name, repr(Pbar),repr(Pe),repr(k),repr(se),[repr(c) if c is not None else None for c in cats], "statsmodels:",repr(sm_kappa(np.array(t))), "z",repr(k/se), "p", repr(math.erfc(abs(k/se)/math.sqrt(2))))
