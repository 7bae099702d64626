"""A canonical x-vector extractor as a torch module.

Five dilated 1-D convolutions with ReLU, statistics pooling (mean and
standard deviation over frames), and a linear projection to the 512-dim
embedding. Frames are the time axis; no padding by default ("valid"
convolutions), population variance in the pooling, eps added under the
square root.
"""

from __future__ import annotations

import torch
from torch import nn

INPUT_DIM = 24
EMBEDDING_DIM = 512

# (in, out, kernel, dilation) for the five TDNN layers
CANONICAL_TDNN = [
    (24, 512, 5, 1),
    (512, 512, 3, 2),
    (512, 512, 3, 3),
    (512, 512, 1, 1),
    (512, 1500, 1, 1),
]


class StatsPooling(nn.Module):
    def __init__(self, eps: float = 1e-5, sample_variance: bool = False):
        super().__init__()
        self.eps = eps
        self.sample_variance = sample_variance

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (channels, frames)
        mean = x.mean(dim=1)
        var = x.var(dim=1, unbiased=self.sample_variance)
        std = torch.sqrt(torch.clamp(var, min=0.0) + self.eps)
        return torch.cat([mean, std])


class XVectorModel(nn.Module):
    """Randomly initialized unless weights are loaded into it."""

    def __init__(self, eps: float = 1e-5, padded: bool = False,
                 sample_variance: bool = False, init_scale: float = 0.05,
                 seed: int | None = None):
        super().__init__()
        if seed is not None:
            torch.manual_seed(seed)
        self.padded = padded
        convs = []
        for in_dim, out_dim, kernel, dilation in CANONICAL_TDNN:
            pad = dilation * (kernel - 1) // 2 if padded else 0
            convs.append(nn.Conv1d(in_dim, out_dim, kernel, dilation=dilation,
                                   padding=pad))
        self.convs = nn.ModuleList(convs)
        self.pool = StatsPooling(eps=eps, sample_variance=sample_variance)
        self.embed = nn.Linear(2 * CANONICAL_TDNN[-1][1], EMBEDDING_DIM)
        with torch.no_grad():
            for mod in list(self.convs) + [self.embed]:
                mod.weight.uniform_(-init_scale, init_scale)
                mod.bias.uniform_(-init_scale, init_scale)
        self.double()

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        # features: (frames, 24)
        x = features.t().unsqueeze(0)  # (1, channels, frames)
        for conv in self.convs:
            x = torch.relu(conv(x))
        pooled = self.pool(x.squeeze(0))
        return self.embed(pooled)
