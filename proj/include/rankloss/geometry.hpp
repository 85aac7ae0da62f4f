#pragma once

#include <array>

namespace rankloss {

/// Axis-aligned box in corner form. Zero-area boxes are valid.
struct Box {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    bool valid() const;

    std::array<double, 4> as_array() const { return {x1, y1, x2, y2}; }
    static Box from_array(const std::array<double, 4>& v) { return {v[0], v[1], v[2], v[3]}; }

    friend bool operator==(const Box&, const Box&) = default;
};

enum class OverlapKind { IoU, GIoU };

/// Which overlap measure feeds the localisation error, and the threshold used to
/// normalise it. For IoU, tau is the TP labelling threshold (0.5 by default).
/// For GIoU, the measure is first mapped to [0,1] by (1 + GIoU) / 2 and tau
/// applies to that renormalised value (0 by default).
struct LocErrorKind {
    OverlapKind overlap = OverlapKind::IoU;
    double tau = 0.5;

    static LocErrorKind iou(double tau = 0.5) { return {OverlapKind::IoU, tau}; }
    static LocErrorKind giou(double tau = 0.0) { return {OverlapKind::GIoU, tau}; }

    friend bool operator==(const LocErrorKind&, const LocErrorKind&) = default;
};

double iou(const Box& a, const Box& b);
double giou(const Box& a, const Box& b);

/// Overlap measure of `kind`, already mapped into [0,1].
double normalized_overlap(const Box& pred, const Box& gt, const LocErrorKind& kind);

/// (1 - overlap) / (1 - tau). Throws ValidationError when the overlap is below tau.
double loc_error(const Box& pred, const Box& gt, const LocErrorKind& kind);

struct LocErrorGrad {
    std::array<double, 4> d{};  // d/dx1, d/dy1, d/dx2, d/dy2 of pred
    // Set when some edge of pred coincides with an edge of gt (or of the hull).
    // The derivative there is the midpoint of the two one-sided derivatives.
    bool nonsmooth = false;
};

/// Analytic gradient of loc_error wrt the predicted box coordinates.
LocErrorGrad loc_error_grad(const Box& pred, const Box& gt, const LocErrorKind& kind);

}  // namespace rankloss
