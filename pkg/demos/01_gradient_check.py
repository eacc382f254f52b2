"""
Checking hand-written gradients
===============================

Every primitive in ``attn_cropnet.tensor`` has a forward and a backward
function. Here we compare a backward pass with central finite differences,
first for a single convolution and then for the whole network.
"""
import numpy as np

from attn_cropnet import model as M, tensor as tc

rng = np.random.default_rng(0)

# A 5x5 three-channel image and four 3x3 filters.
x = rng.normal(size=(5, 5, 3))
k = rng.normal(size=(3, 3, 3, 4))
b = np.zeros(4)

# Contract the output with a random "upstream gradient" to get a scalar.
up = rng.normal(size=(5, 5, 4))
loss = lambda kern: float((tc.conv2d(x, kern, b) * up).sum())
_, dk, _ = tc.conv2d_backward(up, x, k)
print("conv2d kernels:", tc.finite_diff_grad_check(loss, k, dk))

# Now the full model on a tiny configuration. Dropout masks are fixed so the
# loss is a deterministic function of the parameters. With zero biases a
# narrow ReLU stack can start dead (some init seeds give an all-zero
# satellite gradient), so we pick a seed where every branch is active.
cfg = M.ModelConfig(patch_h=4, patch_w=4, channels=(3, 4, 4), mlp_hidden=(4, 4), d_e=3,
                    d_a=4, head_hidden=4, attention_dropout=0.2)
params = M.init_params(cfg, seed=3)
patches = rng.random((2, 3, 4, 4, 3))
env = rng.random((2, 3, 6))
y = np.array([4.0, 6.5])
masks = M.draw_masks(cfg, (2, 3), rng)
_, grads = M.loss_and_grads(params, cfg, patches, env, y, masks)

for name in ("conv0_k", "mlp1_w", "att_w", "att_u", "head1_b"):
    def f(v, name=name):
        return M.loss_and_grads({**params, name: v}, cfg, patches, env, y, masks)[0]
    r = tc.finite_diff_grad_check(f, params[name], grads[name])
    print(f"{name:8s} worst relative error {r.max_relative_error:.2e}")

# A deliberately wrong gradient is caught: doubling it gives an error of 1/3.
r = tc.finite_diff_grad_check(lambda v: float((v ** 2).sum()), x, 4 * x)
print("doubled gradient ->", round(r.max_relative_error, 6))
