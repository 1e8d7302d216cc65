#include "bsdekit/problem.hpp"

#include "bsdekit/errors.hpp"

namespace bsde {

void PdeProblem::diffusion_dy(CVecRef /*x*/, double /*t*/, double /*y*/, MatRef out) const {
    out.setZero();
}

void PdeProblem::exact_solution(CVecRef /*x*/, double /*t*/, SolutionJet& /*out*/) const {
    throw PreconditionError("problem '" + name() + "' has no closed-form solution");
}

FunctionalProblem::FunctionalProblem(ProblemFunctions fns) : fns_(std::move(fns)) {
    if (fns_.dim < 1 || fns_.noise_dim < 1) {
        throw PreconditionError("FunctionalProblem: dimensions must be positive");
    }
    if (!(fns_.horizon > 0.0)) throw PreconditionError("FunctionalProblem: horizon must be positive");
    if (fns_.x0.size() != fns_.dim) throw PreconditionError("FunctionalProblem: x0 has wrong size");
    if (!fns_.drift || !fns_.diffusion || !fns_.nonlinearity || !fns_.terminal ||
        !fns_.terminal_grad) {
        throw PreconditionError("FunctionalProblem: drift, diffusion, nonlinearity and terminal are required");
    }
}

void FunctionalProblem::diffusion_dy(CVecRef x, double t, double y, MatRef out) const {
    if (fns_.diffusion_dy) {
        fns_.diffusion_dy(x, t, y, out);
    } else {
        out.setZero();
    }
}

void FunctionalProblem::exact_solution(CVecRef x, double t, SolutionJet& out) const {
    if (!fns_.exact) PdeProblem::exact_solution(x, t, out);
    fns_.exact(x, t, out);
}

ResidualOffsetProblem::ResidualOffsetProblem(ProblemPtr base, double offset)
    : base_(std::move(base)), offset_(offset) {
    if (!base_) throw PreconditionError("ResidualOffsetProblem: null base problem");
}

std::string ResidualOffsetProblem::name() const {
    return base_->name() + "+offset";
}

NonlinearityValue ResidualOffsetProblem::nonlinearity(CVecRef x, double t, double y, CVecRef z,
                                                      VecRef dz) const {
    NonlinearityValue v = base_->nonlinearity(x, t, y, z, dz);
    v.value -= offset_;
    return v;
}

Mat diffusion_metric(const PdeProblem& problem, CVecRef x, double t, double y) {
    Mat g(problem.dim(), problem.noise_dim());
    problem.diffusion(x, t, y, g);
    return g * g.transpose();
}

ExactValue exact_solution(const PdeProblem& problem, CVecRef x, double t) {
    SolutionJet jet;
    jet.grad.resize(problem.dim());
    jet.hess.resize(problem.dim(), problem.dim());
    problem.exact_solution(x, t, jet);
    return {jet.value, jet.grad};
}

}  // namespace bsde
