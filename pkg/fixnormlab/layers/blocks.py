from fixnormlab.autodiff import ops
from fixnormlab.autodiff.tensor import Tensor
from fixnormlab.layers.layer import he_normal, Layer


class Linear(Layer):
    """Bias-free linear map, meant to be followed by batch normalization."""

    def __init__(self, name, in_features, out_features, rng):
        super(Linear, self).__init__(name)
        self.W = Tensor(he_normal(rng, (in_features, out_features), in_features),
                        requires_grad=True, name=f'{name}.W')
        self.weights.append(self.W)

    def forward(self, x, training):
        return ops.matmul(x, self.W)


class Conv2d(Layer):
    """Bias-free convolution, meant to be followed by batch normalization."""

    def __init__(self, name, c_in, c_out, kernel, rng, stride=1, padding=0):
        super(Conv2d, self).__init__(name)
        self.K = Tensor(he_normal(rng, (c_out, c_in, kernel, kernel),
                                  c_in*kernel*kernel),
                        requires_grad=True, name=f'{name}.K')
        self.stride = stride
        self.padding = padding
        self.weights.append(self.K)

    def forward(self, x, training):
        return ops.conv2d(x, self.K, stride=self.stride, padding=self.padding)


class BatchNorm(Layer):

    def __init__(self, name, channels):
        super(BatchNorm, self).__init__(name)
        self.state = ops.BatchNormState(channels)
        self.state.gamma.name = f'{name}.gamma'
        self.state.beta.name = f'{name}.beta'
        self.extras += [self.state.gamma, self.state.beta]

    def forward(self, x, training):
        return ops.batch_norm(x, self.state, training)


class ReLU(Layer):

    def forward(self, x, training):
        return ops.relu(x)


class GlobalAvgPool(Layer):

    def forward(self, x, training):
        return ops.global_avg_pool(x)
