import numpy as np


class Layer(object):

    def __init__(self, name):
        # human-readable name, used for parameter tensor names and logs
        self.name = name
        # weight tensors that may be decayed or norm-fixed
        self.weights = []
        # biases, BN affines and gains; never decayed, never norm-fixed
        self.extras = []

    def __repr__(self):
        return f'<layer:{self.name}>'

    def parameters(self):
        return self.weights + self.extras

    def forward(self, x, training):
        """Map the input tensor to the output tensor."""
        pass


class Network(object):
    """A stack of body layers followed by a classification head.

    forward() returns both the logits and the penultimate features, the
    input of the head, which is what the cross-boundary risk is measured on.
    """

    def __init__(self, body, head):
        self.body = body
        self.head = head

    @property
    def layers(self):
        return self.body + [self.head]

    def parameters(self):
        return sum([layer.parameters() for layer in self.layers], [])

    def zero_grad(self):
        for tensor in self.parameters():
            tensor.zero_grad()

    def features(self, x, training):
        for layer in self.body:
            x = layer.forward(x, training)
        return x

    def forward(self, x, training):
        features = self.features(x, training)
        return self.head.forward(features, training), features


def he_normal(rng, shape, fan_in):
    return rng.standard_normal(shape)*np.sqrt(2.0/fan_in)
