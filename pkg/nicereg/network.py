"""This module provides the registration network: a weight-shared
dual-path encoder with selective propagation of the moving image
features, and a cumulative decoder that emits L coarse-to-fine
displacement fields within a single forward pass.

Encoder: five 3x3x3 convolutions, stride 1 for the first and 2 for the
rest, each followed by LeakyReLU.  The fixed and moving images are
passed through the same encoder in one batched call, giving the feature
pyramids F_f^1..F_f^5 and F_m^1..F_m^5 (F^1 at full resolution).

Decoder: five 3x3x3 convolutions d1..d5 (d1 coarsest), each followed by
LeakyReLU, with trilinear upsampling by two after all but d5.  Level j
consumes the upsampled features of d(j-1), F_f^(6-j), and F_m^(6-j)
if that moving level is propagated (levels L..5 are).  The first
registration step fires after d(6-L), the others after each following
convolution.  Step 1 emits phi_1 directly; step i > 1 emits a residual
that is added to phi_hat_(i-1), the upsampled phi_(i-1).  The
convolution before step i > 1 also receives the moving pyramid level i
warped by phi_hat_(i-1) and phi_hat_(i-1) itself.

Copyright 2026 nicereg developers
"""

import threading
import torch
import torch.nn as nn
from .config import ModelConfig, MAX_STEPS
from .errors import ShapeError
from .field import DisplacementField
from .kernels import (upsample_2x_tensor, upsample_field_tensor,
                      pyramid_tensors, warp_tensor)
from .volume import Volume

__all__ = ('NiceNet', 'Encoder', 'Decoder', 'FeaturePyramid',
           'RegistrationOutput', 'encode', 'select_propagation', 'decode',
           'register', 'param_count')

# Input sizes must be divisible by this (four stride 2 convolutions).
SIZE_MULTIPLE = 2 ** (MAX_STEPS - 1)

# Guards the call counters; evaluate may run the model from several threads.
_counter_lock = threading.Lock()


class ConvLayer(nn.Module):
    """3x3x3 convolution followed by LeakyReLU; counts its calls."""

    def __init__(self, in_channels, out_channels, stride=1, slope=0.2):

        super(ConvLayer, self).__init__()
        self.conv = nn.Conv3d(in_channels, out_channels, 3, stride=stride,
                              padding=1)
        self.act = nn.LeakyReLU(slope)
        self.calls = 0

    def forward(self, x):

        with _counter_lock:
            self.calls += 1
        return self.act(self.conv(x))


class FeaturePyramid(object):
    """Five feature maps; level 1 is at full resolution."""

    def __init__(self, levels):

        if len(levels) != MAX_STEPS:
            raise ShapeError('Expecting %d feature levels, got %d' %
                             (MAX_STEPS, len(levels)))
        self.levels = list(levels)

    def __getitem__(self, i):
        return self.levels[i - 1]

    def __len__(self):
        return len(self.levels)

    @property
    def shapes(self):
        """[(spatial shape, channels), ...]"""

        return [(tuple(f.shape[2:]), f.shape[1]) for f in self.levels]


class RegistrationOutput(object):
    """The fields phi_1..phi_L (coarse to fine) and the upsampled
    fields phi_hat_1..phi_hat_(L-1) as (N, 3, D, H, W) tensors."""

    def __init__(self, phi, phi_hat, residuals=None):

        self.phi = phi
        self.phi_hat = phi_hat
        self.residuals = residuals or []

    @property
    def final(self):
        return self.phi[-1]

    @property
    def L(self):
        return len(self.phi)

    def field(self, i=None, index=0):
        """phi_i (default phi_L) of batch item index as a DisplacementField."""

        phi = self.final if i is None else self.phi[i - 1]
        return DisplacementField.from_tensor(phi[index])

    def detach(self):

        return RegistrationOutput([p.detach() for p in self.phi],
                                  [p.detach() for p in self.phi_hat],
                                  [p.detach() for p in self.residuals])


class Encoder(nn.Module):

    def __init__(self, cfg):

        super(Encoder, self).__init__()
        channels = [1] + list(cfg.enc_channels)
        self.layers = nn.ModuleList(
            [ConvLayer(channels[m], channels[m + 1], 1 if m == 0 else 2,
                       cfg.leaky_slope) for m in range(MAX_STEPS)])
        self.calls = 0

    def forward(self, x):

        with _counter_lock:
            self.calls += 1
        features = []
        for layer in self.layers:
            x = layer(x)
            features.append(x)
        return features


class Decoder(nn.Module):

    def __init__(self, cfg):

        super(Decoder, self).__init__()
        self.L = cfg.L
        enc = cfg.enc_channels
        dec = cfg.dec_channels

        convs = []
        for j in range(1, MAX_STEPS + 1):
            step = self.step_after(j)
            in_channels = enc[MAX_STEPS - j]
            if j > 1:
                in_channels += dec[j - 2]
            if step <= 1:
                in_channels += enc[MAX_STEPS - j]
            else:
                in_channels += 4
            convs.append(ConvLayer(in_channels, dec[j - 1], 1, cfg.leaky_slope))
        self.convs = nn.ModuleList(convs)

        heads = []
        for step in range(1, self.L + 1):
            j = step + MAX_STEPS - self.L
            head = nn.Conv3d(dec[j - 1], 3, 3, padding=1)
            if cfg.head_init_scale > 0:
                nn.init.normal_(head.weight, 0.0, cfg.head_init_scale)
            else:
                nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)
            heads.append(head)
        self.heads = nn.ModuleList(heads)

        # Test hook: steps whose head output is replaced by zeros.
        self.zero_steps = set()

    def step_after(self, j):
        """Registration step performed after convolution j, < 1 if none."""

        return j + self.L - MAX_STEPS

    def forward(self, F_f, F_m_sel, moving):

        phis, phi_hats, residuals = [], [], []
        x = None
        for j in range(1, MAX_STEPS + 1):
            level = MAX_STEPS + 1 - j
            step = self.step_after(j)

            parts = []
            if x is not None:
                parts.append(upsample_2x_tensor(x))
            parts.append(F_f[level])
            if level in F_m_sel:
                parts.append(F_m_sel[level])
            if step >= 2:
                phi_hat = phi_hats[-1]
                parts.append(warp_tensor(moving[step - 1], phi_hat))
                parts.append(phi_hat)
            x = self.convs[j - 1](torch.cat(parts, dim=1))

            if step < 1:
                continue
            out = self.heads[step - 1](x)
            if step in self.zero_steps:
                out = torch.zeros_like(out)
            if step == 1:
                phi = out
            else:
                residuals.append(out)
                phi = phi_hats[-1] + out
            phis.append(phi)
            if step < self.L:
                phi_hats.append(upsample_field_tensor(phi))

        return RegistrationOutput(phis, phi_hats, residuals)


class NiceNet(nn.Module):

    def __init__(self, cfg=None):

        super(NiceNet, self).__init__()
        if cfg is None:
            cfg = ModelConfig()
        self.config = cfg
        self.encoder = Encoder(cfg)
        self.decoder = Decoder(cfg)
        self.encode_calls = 0
        self.decode_calls = 0

    @property
    def L(self):
        return self.config.L

    @property
    def dtype(self):
        return next(self.parameters()).dtype

    @property
    def device(self):
        return next(self.parameters()).device

    def encode(self, I_f, I_m):
        """Return the fixed and moving feature pyramids from one call of
        the shared encoder."""

        if I_f.shape != I_m.shape:
            raise ShapeError('Fixed shape %s differs from moving shape %s' %
                             (tuple(I_f.shape), tuple(I_m.shape)))
        for n in I_f.shape[2:]:
            if n % SIZE_MULTIPLE:
                raise ShapeError('Input shape %s not divisible by %d' %
                                 (tuple(I_f.shape[2:]), SIZE_MULTIPLE))
        with _counter_lock:
            self.encode_calls += 1
        N = I_f.shape[0]
        features = self.encoder(torch.cat([I_f, I_m], dim=0))
        return (FeaturePyramid([f[:N] for f in features]),
                FeaturePyramid([f[N:] for f in features]))

    def decode(self, F_f, F_m_sel, moving_pyr):

        if len(moving_pyr) != self.L:
            raise ShapeError('Expecting %d moving levels, got %d' %
                             (self.L, len(moving_pyr)))
        with _counter_lock:
            self.decode_calls += 1
        return self.decoder(F_f, F_m_sel, moving_pyr)

    def forward(self, I_f, I_m):

        F_f, F_m = self.encode(I_f, I_m)
        moving_pyr = pyramid_tensors(I_m, self.L)
        return self.decode(F_f, select_propagation(F_m, self.L), moving_pyr)

    def zero_head_steps(self, steps=()):
        """Force the head outputs of the given steps to zero."""

        self.decoder.zero_steps = set(steps)

    def invocation_counts(self):
        """Calls of the encoder, of each encoder and decoder convolution,
        and of encode and decode."""

        counts = {'encode': self.encode_calls, 'decode': self.decode_calls,
                  'encoder': self.encoder.calls}
        for m, layer in enumerate(self.encoder.layers):
            counts['encoder.conv%d' % (m + 1)] = layer.calls
        for m, layer in enumerate(self.decoder.convs):
            counts['decoder.conv%d' % (m + 1)] = layer.calls
        return counts

    def reset_counters(self):

        self.encode_calls = 0
        self.decode_calls = 0
        self.encoder.calls = 0
        for layer in list(self.encoder.layers) + list(self.decoder.convs):
            layer.calls = 0


def encode(I_f, I_m, model):

    return model.encode(I_f, I_m)


def select_propagation(F_m, L):
    """Return the propagated moving features {level: feature} for
    levels L..5."""

    if not 1 <= L <= MAX_STEPS:
        raise ValueError('L must be in 1..%d, got %s' % (MAX_STEPS, L))
    return {level: F_m[level] for level in range(L, MAX_STEPS + 1)}


def decode(F_f, F_m_sel, moving_pyr, model):

    return model.decode(F_f, F_m_sel, moving_pyr)


def _input_tensor(vol, model):

    if isinstance(vol, Volume):
        return vol.tensor(dtype=model.dtype, device=model.device)
    return vol.to(dtype=model.dtype, device=model.device)


def register(I_f, I_m, model):
    """Register moving image I_m to fixed image I_f in one forward pass.
    The images are Volumes or (N, 1, D, H, W) tensors."""

    return model(_input_tensor(I_f, model), _input_tensor(I_m, model))


def param_count(cfg=None):
    """Number of trainable parameters; the shared encoder counts once."""

    model = NiceNet(cfg)
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
