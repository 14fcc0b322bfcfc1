"""Build a computation graph, read exact gradients off it, and verify them
against central finite differences."""
import numpy as np

from fewvid import autodiff as ad

# a small scalar chain: loss = sum((sigmoid(x @ w) - t)^2)
rng = np.random.default_rng(0)
x = ad.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
w = ad.Tensor(rng.normal(size=(3, 1)), requires_grad=True)
t = ad.Tensor(rng.normal(size=(4, 1)))

pred = ad.sigmoid(x @ w)
loss = ad.square(pred - t).sum()
print("loss:", float(loss.data))

grads = ad.backward(loss)
print("dloss/dw:\n", grads[w])

# the graph is re-runnable: change a leaf in place and re-evaluate
w.data[0, 0] += 1.0
print("loss after nudging w[0,0]:", float(ad.forward(loss).data))
w.data[0, 0] -= 1.0

# max picks the first attaining index on ties, so its gradient is one-hot
m = ad.Tensor(np.array([[1.0, 3.0, 3.0, 0.0]]), requires_grad=True)
top = m.max()
print("max grad (tie at columns 1 and 2):", ad.backward(top)[m])

# independent numerical check of the whole objective
def builder(leaves):
    return ad.square(ad.sigmoid(leaves["x"] @ leaves["w"]) - t).sum()

report = ad.grad_check(builder, {"x": x.data, "w": w.data}, h=1e-5, tol=1e-4)
print(report.summary())
