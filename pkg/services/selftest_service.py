from typing import Any, Dict, List
import logging

import numpy as np

from ir_response.common import time_grid
from ir_response.dynamics import propagate, symplectic_defect
from ir_response.estimators import (
    EnsembleOptions,
    HermanKlukKernel,
    HybridKernel,
    LscKernel,
    evaluate_samples,
    response_lsc,
)
from ir_response.model import ModelSystem, MorseBathParams, bound_state_count, morse_levels
from ir_response.quantum_ref import response_quantum, solve_eigenproblem
from ir_response.sampling import BoltzmannProposal, draw_samples
from ir_response.semiclassics import WidthMatrix, factorized_determinants, matrix_A, prefactor_matrix

logger = logging.getLogger(__name__)

TEMPERATURE = 7.0


class SelftestService:
    """Быстрые проверки инвариантов, выполняемые командой selftest"""

    @staticmethod
    def morse_spectrum() -> Dict[str, Any]:
        params = MorseBathParams()
        model = ModelSystem.morse_bath(params, n_bath=0)
        spectrum = solve_eigenproblem(model)
        error = float(np.max(np.abs(spectrum.eigenvalues[:21] - morse_levels(params, 20))))
        count = bound_state_count(params)
        return {"passed": error < 1e-6 and count == 50,
                "detail": f"max |E_n - E_n(анал.)| = {error:.2e}, связанных состояний {count}"}

    @staticmethod
    def semiclassical_identities() -> Dict[str, Any]:
        """det A·(4ħ²)^N = |C|⁴, факторизация через r, s и симплектичность вдоль траекторий"""
        beta = 1.0 / TEMPERATURE
        worst = {"identity": 0.0, "factorized": 0.0, "symplectic": 0.0}
        for coupling, n_bath in ((0.0, 0), (0.1, 1)):
            model = ModelSystem.morse_bath(MorseBathParams(coupling=coupling), n_bath=n_bath)
            widths = WidthMatrix.matched(model)
            proposal = BoltzmannProposal(model, beta)
            batch = draw_samples(proposal, None, [], seed=7, start=0, stop=10)
            traj = propagate(model, batch.z_bar, 5.0, 1e-3, 0.5, widths=widths)
            M = traj.monodromy
            n = model.n_total
            c4 = np.abs(np.exp(traj.prefactor_log)) ** 4
            det_a = np.linalg.det(matrix_A(M, widths)) * 4.0 ** n
            _, det_a_rs = factorized_determinants(M, widths)
            det_a_block = np.linalg.det(matrix_A(M, widths))
            worst["identity"] = max(worst["identity"], float(np.max(np.abs(det_a / c4 - 1.0))))
            worst["factorized"] = max(worst["factorized"], float(np.max(np.abs(det_a_rs / det_a_block - 1.0))))
            worst["symplectic"] = max(worst["symplectic"], float(np.max(symplectic_defect(M))))
            # |C|² из отслеживаемого логарифма совпадает с |det h|
            abs_h = np.abs(np.linalg.det(prefactor_matrix(M, widths)))
            worst["identity"] = max(worst["identity"], float(np.max(np.abs(np.abs(np.exp(traj.prefactor_log)) ** 2 / abs_h - 1.0))))
        passed = worst["identity"] < 1e-8 and worst["factorized"] < 1e-8 and worst["symplectic"] < 1e-6
        return {"passed": passed, "detail": ", ".join(f"{k}={v:.1e}" for k, v in worst.items())}

    @staticmethod
    def harmonic_exactness() -> Dict[str, Any]:
        """Квантовый и ЛСК-отклик гармонического осциллятора равны sin(ωt)/(mω)"""
        beta = 1.0 / TEMPERATURE
        omega = 4.0
        model = ModelSystem.harmonic([omega])
        times = time_grid(20.0, 0.1)
        quantum = response_quantum(solve_eigenproblem(model, beta=beta), beta, times)
        exact = np.sin(omega * times) / omega
        q_err = float(np.max(np.abs(quantum.real - exact)))

        options = EnsembleOptions(t_max=5.0, dt=0.01, output_stride=0.1, chunk_size=1000)
        lsc = response_lsc(model, beta, 4000, seed=3, options=options)
        exact_lsc = np.sin(omega * lsc.times) / omega
        sigma = np.abs(lsc.real - exact_lsc) / np.maximum(lsc.stderr_real, 1e-300)
        sigma[lsc.stderr_real == 0] = 0.0
        passed = q_err < 1e-8 and float(np.max(sigma)) < 4.0
        return {"passed": passed,
                "detail": f"квант: {q_err:.1e}, ЛСК: max отклонение {np.max(sigma):.2f}σ"}

    @staticmethod
    def reduction_identities() -> Dict[str, Any]:
        """Гибрид без бани совпадает с HK, гибрид с замороженной разностью - с ЛСК"""
        beta = 1.0 / TEMPERATURE
        options = EnsembleOptions(t_max=2.0, dt=1e-3, output_stride=0.1)

        model_1d = ModelSystem.morse_bath(MorseBathParams(), n_bath=0)
        widths_1d = WidthMatrix.matched(model_1d)
        proposal_1d = BoltzmannProposal(model_1d, beta)
        _, c_hk, _ = evaluate_samples(HermanKlukKernel(model_1d, beta, widths_1d), proposal_1d, 11, 0, 8, options)
        _, c_hy, _ = evaluate_samples(HybridKernel(model_1d, beta, widths_1d), proposal_1d, 11, 0, 8, options)
        hk_gap = float(np.max(np.abs(c_hk - c_hy) / np.maximum(np.abs(c_hk), 1e-300)))

        model_2d = ModelSystem.morse_bath(MorseBathParams(coupling=0.1), n_bath=1)
        widths_2d = WidthMatrix.matched(model_2d)
        proposal_2d = BoltzmannProposal(model_2d, beta)
        _, c_lsc, _ = evaluate_samples(LscKernel(model_2d, beta, None), proposal_2d, 5, 0, 8, options)
        frozen = HybridKernel(model_2d, beta, widths_2d, freeze_system_difference=True)
        _, c_frz, _ = evaluate_samples(frozen, proposal_2d, 5, 0, 8, options)
        scale = np.max(np.abs(c_lsc))
        lsc_gap = float(np.max(np.abs(c_lsc - c_frz)) / scale)
        return {"passed": hk_gap < 1e-12 and lsc_gap < 1e-8,
                "detail": f"гибрид/HK: {hk_gap:.1e}, замороженный гибрид/ЛСК: {lsc_gap:.1e}"}

    @staticmethod
    def run_all() -> List[Dict[str, Any]]:
        checks: List[tuple] = [
            ("morse_spectrum", SelftestService.morse_spectrum),
            ("semiclassical_identities", SelftestService.semiclassical_identities),
            ("harmonic_exactness", SelftestService.harmonic_exactness),
            ("reduction_identities", SelftestService.reduction_identities),
        ]
        results = []
        for name, check in checks:
            try:
                result = check()
            except Exception as e:
                logger.error(f"Проверка {name} завершилась исключением: {e}")
                result = {"passed": False, "detail": f"исключение: {e}"}
            result["name"] = name
            logger.info(f"{'OK ' if result['passed'] else 'FAIL'} {name}: {result['detail']}")
            results.append(result)
        return results
