#include "chartdet/taxonomy.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "chartdet/errors.hpp"

namespace chartdet {

namespace {

const std::array<std::string, kNumCategories> kCategoryNames = {
    "x-axis-title", "y-axis-title", "x-tick-label", "y-tick-label",
    "x-tick-mark",  "y-tick-mark",  "chart-title",  "legend-marker",
    "legend-label", "legend-title", "value-label",  "mark-label",
    "tick-grouping", "others",      "plot-area",    "x-axis-area",
    "y-axis-area",  "legend-area"};

const std::array<std::string, 12> kRawNames = {
    "axis title",   "tick label",   "tick mark",  "chart title",
    "legend marker", "legend label", "legend title", "value label",
    "mark label",   "tick grouping", "others",    "plot area"};

constexpr double kAxisTolerancePx = 2.0;

AxisSide geometric_axis_side(const Box& b, const Box& plot_area) {
  const double cx = b.cx();
  const double cy = b.cy();
  const bool below_bottom = cy > plot_area.y2 - kAxisTolerancePx;
  const bool left_of_left = cx < plot_area.x1 + kAxisTolerancePx;
  if (below_bottom && !left_of_left) return AxisSide::kX;
  if (left_of_left && !below_bottom) return AxisSide::kY;
  // Both or neither: nearest edge wins, ties to x.
  const double dist_bottom = std::abs(cy - plot_area.y2);
  const double dist_left = std::abs(cx - plot_area.x1);
  return dist_bottom <= dist_left ? AxisSide::kX : AxisSide::kY;
}

ChartCategory axis_split(RawCategory raw, AxisSide side) {
  switch (raw) {
    case RawCategory::kAxisTitle:
      return side == AxisSide::kX ? ChartCategory::kXAxisTitle
                                  : ChartCategory::kYAxisTitle;
    case RawCategory::kTickLabel:
      return side == AxisSide::kX ? ChartCategory::kXTickLabel
                                  : ChartCategory::kYTickLabel;
    case RawCategory::kTickMark:
      return side == AxisSide::kX ? ChartCategory::kXTickMark
                                  : ChartCategory::kYTickMark;
    default:
      throw SchemaError("axis_split: category is not axis-tied");
  }
}

ChartCategory direct_map(RawCategory raw) {
  switch (raw) {
    case RawCategory::kChartTitle:   return ChartCategory::kChartTitle;
    case RawCategory::kLegendMarker: return ChartCategory::kLegendMarker;
    case RawCategory::kLegendLabel:  return ChartCategory::kLegendLabel;
    case RawCategory::kLegendTitle:  return ChartCategory::kLegendTitle;
    case RawCategory::kValueLabel:   return ChartCategory::kValueLabel;
    case RawCategory::kMarkLabel:    return ChartCategory::kMarkLabel;
    case RawCategory::kTickGrouping: return ChartCategory::kTickGrouping;
    case RawCategory::kOthers:       return ChartCategory::kOthers;
    case RawCategory::kPlotArea:     return ChartCategory::kPlotArea;
    default:
      throw SchemaError("direct_map: axis-tied category requires separation");
  }
}

bool is_axis_tied(RawCategory raw) {
  return raw == RawCategory::kAxisTitle || raw == RawCategory::kTickLabel ||
         raw == RawCategory::kTickMark;
}

}  // namespace

const std::string& category_name(ChartCategory c) {
  return kCategoryNames[static_cast<std::size_t>(static_cast<int>(c) - 1)];
}

ChartCategory category_from_id(int id) {
  if (id < 1 || id > kNumCategories) {
    throw SchemaError("category id out of range [1,18]: " + std::to_string(id));
  }
  return static_cast<ChartCategory>(id);
}

ChartCategory category_from_name(const std::string& name) {
  for (int i = 0; i < kNumCategories; ++i) {
    if (kCategoryNames[static_cast<std::size_t>(i)] == name) {
      return static_cast<ChartCategory>(i + 1);
    }
  }
  throw SchemaError("unknown refined category name: '" + name + "'");
}

const std::string& raw_category_name(RawCategory c) {
  return kRawNames[static_cast<std::size_t>(static_cast<int>(c))];
}

RawCategory raw_category_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kRawNames.size(); ++i) {
    if (kRawNames[i] == name) return static_cast<RawCategory>(static_cast<int>(i));
  }
  throw SchemaError("unknown source category name: '" + name + "'");
}

Box find_plot_area(const std::vector<SourceAnnotation>& annotations) {
  const Box* found = nullptr;
  int count = 0;
  for (const auto& a : annotations) {
    if (raw_category_from_name(a.raw_category) == RawCategory::kPlotArea) {
      found = &a.box;
      ++count;
    }
  }
  if (count != 1) {
    throw RefinementError("expected exactly one plot-area annotation, found " +
                          std::to_string(count));
  }
  return *found;
}

std::vector<LabeledBox> separate_axis_elements(
    const std::vector<SourceAnnotation>& annotations, const Box& plot_area) {
  std::vector<LabeledBox> out;
  out.reserve(annotations.size());
  for (const auto& a : annotations) {
    const RawCategory raw = raw_category_from_name(a.raw_category);
    LabeledBox lb;
    lb.box = a.box;
    lb.id = a.id;
    if (is_axis_tied(raw)) {
      const AxisSide side = a.axis_association
                                ? *a.axis_association
                                : geometric_axis_side(a.box, plot_area);
      lb.category = axis_split(raw, side);
    } else {
      lb.category = direct_map(raw);
    }
    out.push_back(lb);
  }
  return out;
}

std::vector<LabeledBox> synthesize_structure_areas(
    const std::vector<LabeledBox>& refined, const Box& plot_area) {
  (void)plot_area;  // plot-area passes through inside `refined`
  std::vector<LabeledBox> out = refined;

  std::int64_t next_id = 0;
  for (const auto& lb : refined) next_id = std::max(next_id, lb.id);

  const auto add_union = [&](std::initializer_list<ChartCategory> members,
                             ChartCategory area) {
    bool any = false;
    Box u;
    for (const auto& lb : refined) {
      if (std::find(members.begin(), members.end(), lb.category) == members.end())
        continue;
      u = any ? union_box(u, lb.box) : lb.box;
      any = true;
    }
    if (!any) return;
    LabeledBox area_box;
    area_box.box = u;
    area_box.category = area;
    area_box.id = ++next_id;
    out.push_back(area_box);
  };

  add_union({ChartCategory::kXTickMark, ChartCategory::kXTickLabel,
             ChartCategory::kXAxisTitle},
            ChartCategory::kXAxisArea);
  add_union({ChartCategory::kYTickMark, ChartCategory::kYTickLabel,
             ChartCategory::kYAxisTitle},
            ChartCategory::kYAxisArea);
  add_union({ChartCategory::kLegendMarker, ChartCategory::kLegendLabel,
             ChartCategory::kLegendTitle},
            ChartCategory::kLegendArea);
  return out;
}

std::optional<RawCategory> refined_to_raw(ChartCategory c) {
  switch (c) {
    case ChartCategory::kXAxisTitle:
    case ChartCategory::kYAxisTitle:   return RawCategory::kAxisTitle;
    case ChartCategory::kXTickLabel:
    case ChartCategory::kYTickLabel:   return RawCategory::kTickLabel;
    case ChartCategory::kXTickMark:
    case ChartCategory::kYTickMark:    return RawCategory::kTickMark;
    case ChartCategory::kChartTitle:   return RawCategory::kChartTitle;
    case ChartCategory::kLegendMarker: return RawCategory::kLegendMarker;
    case ChartCategory::kLegendLabel:  return RawCategory::kLegendLabel;
    case ChartCategory::kLegendTitle:  return RawCategory::kLegendTitle;
    case ChartCategory::kValueLabel:   return RawCategory::kValueLabel;
    case ChartCategory::kMarkLabel:    return RawCategory::kMarkLabel;
    case ChartCategory::kTickGrouping: return RawCategory::kTickGrouping;
    case ChartCategory::kOthers:       return RawCategory::kOthers;
    case ChartCategory::kPlotArea:     return RawCategory::kPlotArea;
    default:                           return std::nullopt;
  }
}

}  // namespace chartdet
