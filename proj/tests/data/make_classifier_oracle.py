# Regenerates classifier_oracle.{csv,json} with scikit-learn (run from the repo root).
import numpy as np, json
from sklearn.ensemble import GradientBoostingClassifier
from sklearn.linear_model import LogisticRegression, LogisticRegressionCV
from sklearn.model_selection import KFold
rng = np.random.default_rng(7)
n = 1200
X = rng.normal(size=(n, 4))
score = np.stack([X[:,0] + 0.5*X[:,1], -X[:,0] + X[:,2]**2 - 1, 0.3*X[:,3]], 1) + 0.5*rng.normal(size=(n,3))
y = score.argmax(1)
tr, te = slice(0, 900), slice(900, None)
gbt = GradientBoostingClassifier(random_state=0).fit(X[tr], y[tr])
lr = LogisticRegression(C=1.0, tol=1e-10, max_iter=10000).fit(X[tr], y[tr])
cv = LogisticRegressionCV(Cs=10, cv=KFold(5), max_iter=1000).fit(X[tr], y[tr])
np.savetxt("tests/data/classifier_oracle.csv", np.column_stack([X, y]), delimiter=",", fmt="%.17g")
json.dump({"train_rows": 900,
           "gbt_test_accuracy": gbt.score(X[te], y[te]),
           "gbt_importances": gbt.feature_importances_.tolist(),
           "lr_coef": lr.coef_.tolist(), "lr_intercept": lr.intercept_.tolist(),
           "lr_test_accuracy": lr.score(X[te], y[te]),
           "cv_c": float(cv.C_[0]), "cv_test_accuracy": cv.score(X[te], y[te])},
          open("tests/data/classifier_oracle.json", "w"), indent=1)
print(open("tests/data/classifier_oracle.json").read())
