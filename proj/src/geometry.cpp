#include "rankloss/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rankloss/errors.hpp"

namespace rankloss {

namespace {

void require_valid(const Box& b, const char* what) {
    if (!b.valid()) {
        std::ostringstream msg;
        msg << what << " box [" << b.x1 << "," << b.y1 << "," << b.x2 << "," << b.y2
            << "] is not a valid corner-form box";
        throw ValidationError(msg.str());
    }
}

// Derivative of max(t, 0); the midpoint 1/2 at the kink.
double relu_slope(double t, bool& kink) {
    if (t > 0.0) return 1.0;
    if (t < 0.0) return 0.0;
    kink = true;
    return 0.5;
}

// Slope of an edge that is selected by min/max against a fixed edge: `own`
// when pred's edge wins strictly, zero when gt's edge wins, half at a tie.
double edge_slope(bool pred_wins, bool tie, double own, bool& kink) {
    if (tie) {
        kink = true;
        return 0.5 * own;
    }
    return pred_wins ? own : 0.0;
}

using Vec4 = std::array<double, 4>;

struct OverlapParts {
    double inter = 0.0;
    double uni = 0.0;
    double hull = 0.0;
    Vec4 d_inter{};
    Vec4 d_uni{};
    Vec4 d_hull{};
    bool kink = false;
};

// Intersection, union and enclosing-hull areas with their partials wrt pred.
OverlapParts overlap_parts(const Box& p, const Box& g) {
    OverlapParts r;

    const double iw = std::min(p.x2, g.x2) - std::max(p.x1, g.x1);
    const double ih = std::min(p.y2, g.y2) - std::max(p.y1, g.y1);
    const double riw = std::max(iw, 0.0);
    const double rih = std::max(ih, 0.0);

    // Partials of iw wrt (x1, x2) and ih wrt (y1, y2).
    const double diw_dx1 = edge_slope(p.x1 > g.x1, p.x1 == g.x1, -1.0, r.kink);
    const double diw_dx2 = edge_slope(p.x2 < g.x2, p.x2 == g.x2, 1.0, r.kink);
    const double dih_dy1 = edge_slope(p.y1 > g.y1, p.y1 == g.y1, -1.0, r.kink);
    const double dih_dy2 = edge_slope(p.y2 < g.y2, p.y2 == g.y2, 1.0, r.kink);

    const double sw = relu_slope(iw, r.kink);
    const double sh = relu_slope(ih, r.kink);
    r.inter = riw * rih;
    r.d_inter = {sw * diw_dx1 * rih, sh * dih_dy1 * riw, sw * diw_dx2 * rih, sh * dih_dy2 * riw};

    const double w = p.width();
    const double h = p.height();
    const Vec4 d_area{-h, -w, h, w};
    r.uni = p.area() + g.area() - r.inter;
    for (int k = 0; k < 4; ++k) r.d_uni[k] = d_area[k] - r.d_inter[k];

    const double cw = std::max(p.x2, g.x2) - std::min(p.x1, g.x1);
    const double ch = std::max(p.y2, g.y2) - std::min(p.y1, g.y1);
    const double dcw_dx1 = edge_slope(p.x1 < g.x1, p.x1 == g.x1, -1.0, r.kink);
    const double dcw_dx2 = edge_slope(p.x2 > g.x2, p.x2 == g.x2, 1.0, r.kink);
    const double dch_dy1 = edge_slope(p.y1 < g.y1, p.y1 == g.y1, -1.0, r.kink);
    const double dch_dy2 = edge_slope(p.y2 > g.y2, p.y2 == g.y2, 1.0, r.kink);
    r.hull = cw * ch;
    r.d_hull = {dcw_dx1 * ch, dch_dy1 * cw, dcw_dx2 * ch, dch_dy2 * cw};
    return r;
}

double intersection_area(const Box& a, const Box& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    return std::max(iw, 0.0) * std::max(ih, 0.0);
}

double hull_area(const Box& a, const Box& b) {
    return (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) *
           (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
}

}  // namespace

bool Box::valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
           x1 <= x2 && y1 <= y2;
}

double iou(const Box& a, const Box& b) {
    require_valid(a, "first");
    require_valid(b, "second");
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    if (!(uni > 0.0)) throw ValidationError("iou: union of two zero-area boxes is undefined");
    return inter / uni;
}

double giou(const Box& a, const Box& b) {
    require_valid(a, "first");
    require_valid(b, "second");
    const double hull = hull_area(a, b);
    if (!(hull > 0.0)) throw ValidationError("giou: enclosing box has zero area");
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    const double overlap = uni > 0.0 ? inter / uni : 0.0;
    return overlap - (hull - uni) / hull;
}

double normalized_overlap(const Box& pred, const Box& gt, const LocErrorKind& kind) {
    if (kind.overlap == OverlapKind::IoU) return iou(pred, gt);
    return 0.5 * (1.0 + giou(pred, gt));
}

double loc_error(const Box& pred, const Box& gt, const LocErrorKind& kind) {
    if (!(kind.tau >= 0.0 && kind.tau < 1.0)) throw ValidationError("loc_error: tau must lie in [0,1)");
    const double overlap = normalized_overlap(pred, gt, kind);
    if (overlap < kind.tau) {
        std::ostringstream msg;
        msg << "loc_error: overlap " << overlap << " is below the TP threshold " << kind.tau;
        throw ValidationError(msg.str());
    }
    return (1.0 - overlap) / (1.0 - kind.tau);
}

LocErrorGrad loc_error_grad(const Box& pred, const Box& gt, const LocErrorKind& kind) {
    require_valid(pred, "predicted");
    require_valid(gt, "ground-truth");
    if (!(kind.tau >= 0.0 && kind.tau < 1.0)) throw ValidationError("loc_error_grad: tau must lie in [0,1)");

    const OverlapParts o = overlap_parts(pred, gt);
    if (!(o.uni > 0.0)) throw ValidationError("loc_error_grad: union of two zero-area boxes is undefined");

    LocErrorGrad out;
    out.nonsmooth = o.kink;

    Vec4 d_overlap{};
    for (int k = 0; k < 4; ++k) {
        d_overlap[k] = (o.d_inter[k] * o.uni - o.inter * o.d_uni[k]) / (o.uni * o.uni);
    }
    if (kind.overlap == OverlapKind::GIoU) {
        if (!(o.hull > 0.0)) throw ValidationError("loc_error_grad: enclosing box has zero area");
        // GIoU = IoU - 1 + U / C, then mapped through (1 + GIoU) / 2.
        for (int k = 0; k < 4; ++k) {
            const double d_ratio = (o.d_uni[k] * o.hull - o.uni * o.d_hull[k]) / (o.hull * o.hull);
            d_overlap[k] = 0.5 * (d_overlap[k] + d_ratio);
        }
    }
    const double scale = -1.0 / (1.0 - kind.tau);
    for (int k = 0; k < 4; ++k) out.d[k] = scale * d_overlap[k];
    return out;
}

}  // namespace rankloss
