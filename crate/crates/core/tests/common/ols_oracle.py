# Rebuilds the 40-row hand panel of ols_oracle.rs and prints OLS coefficients
# and CR1 standard errors with and without fixed effects.
import numpy as np
rows=[]
for k in range(40):
    m=k%5; year=2008+k//5; tr=int(m>=3); post=int(year>=2012)
    female=int((k*7)%3==0); inc=200+37*((k*13)%11); edu=9+((k*5)%7)
    gpa=None if k in (5,22) else -1.5+0.1*((k*17)%31)
    moved=int(((k*11+3)%7<2) or (tr and post and k%3==0))
    rows.append(dict(m=m,year=year,tr=tr,post=post,female=female,inc=inc,edu=edu,gpa=gpa,moved=moved))
y=np.array([r['moved'] for r in rows],float)
gp=[r['gpa'] for r in rows if r['gpa'] is not None]; gmean=sum(gp)/len(gp)
def design(fe):
    cols={'intercept':[1.0]*40,'treated_x_post':[float(r['tr']*r['post']) for r in rows]}
    if not fe:
        cols['treated']=[float(r['tr']) for r in rows]; cols['post']=[float(r['post']) for r in rows]
    cols['female']=[float(r['female']) for r in rows]
    cols['parental_income']=[float(r['inc']) for r in rows]
    cols['parental_education_years']=[float(r['edu']) for r in rows]
    cols['gpa']=[r['gpa'] if r['gpa'] is not None else gmean for r in rows]
    cols['missing_gpa']=[float(r['gpa'] is None) for r in rows]
    if fe:
        for yr in range(2009,2016): cols[f'year_{yr}']=[float(r['year']==yr) for r in rows]
        for mm in range(1,5): cols[f'municipality_{mm}']=[float(r['m']==mm) for r in rows]
    return list(cols), np.array(list(cols.values())).T
for fe in (True,False):
    names,X=design(fe)
    n,K=X.shape
    XtX_inv=np.linalg.inv(X.T@X)
    b=XtX_inv@X.T@y
    e=y-X@b
    G=5
    meat=np.zeros((K,K))
    for g in range(G):
        idx=[i for i,r in enumerate(rows) if r['m']==g]
        s=X[idx].T@e[idx]; meat+=np.outer(s,s)
    V=XtX_inv@meat@XtX_inv*(G/(G-1))*((n-1)/(n-K))
    se=np.sqrt(np.diag(V))
    print("FE" if fe else "NOFE")
    for nm,bb,ss in zip(names,b,se):
        print(f"    (\"{nm}\", {float(bb)!r}, {float(ss)!r}),")
