import numpy as np

from femeig import fe_space
from femeig.quadrature import triangle_rule


def l2_error_against(dofmap, full_coeffs, f, quad_degree=10):
    """L2 norm of (FE function - f) via high-degree quadrature."""
    mesh = dofmap.mesh
    rule = triangle_rule(quad_degree)
    vals = fe_space.cell_function_values(dofmap, full_coeffs, None, rule.xy)
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    phys = v0[:, None, :] + np.einsum("mij,qj->mqi", mesh.jacobians, rule.xy)
    fv = f(phys[..., 0], phys[..., 1])
    wdet = rule.weights[None, :] * mesh.jacobian_dets[:, None]
    return float(np.sqrt(np.sum(wdet * (vals - fv) ** 2)))


def l2_norm_callable(mesh, f, quad_degree=10):
    """L2 norm of a callable field over the mesh."""
    rule = triangle_rule(quad_degree)
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    phys = v0[:, None, :] + np.einsum("mij,qj->mqi", mesh.jacobians, rule.xy)
    fv = f(phys[..., 0], phys[..., 1])
    wdet = rule.weights[None, :] * mesh.jacobian_dets[:, None]
    return float(np.sqrt(np.sum(wdet * fv**2)))


def sin_mode(m, n):
    return lambda x, y: np.sin(m * np.pi * x) * np.sin(n * np.pi * y)
