#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chartdet/geometry.hpp"

namespace chartdet {

// The refined 18-class schema. Ids 1..18 follow this order in every dataset
// file. The first 14 are basic skeleton elements, the last 4 structural areas.
enum class ChartCategory : int {
  kXAxisTitle = 1,
  kYAxisTitle = 2,
  kXTickLabel = 3,
  kYTickLabel = 4,
  kXTickMark = 5,
  kYTickMark = 6,
  kChartTitle = 7,
  kLegendMarker = 8,
  kLegendLabel = 9,
  kLegendTitle = 10,
  kValueLabel = 11,
  kMarkLabel = 12,
  kTickGrouping = 13,
  kOthers = 14,
  kPlotArea = 15,
  kXAxisArea = 16,
  kYAxisArea = 17,
  kLegendArea = 18,
};

inline constexpr int kNumCategories = 18;

const std::string& category_name(ChartCategory c);
ChartCategory category_from_id(int id);           // throws SchemaError out of [1,18]
ChartCategory category_from_name(const std::string& name);  // throws SchemaError

inline bool is_structural_area(ChartCategory c) {
  return static_cast<int>(c) >= static_cast<int>(ChartCategory::kPlotArea);
}

// Universal annotation/detection record. score is present iff the record is
// a prediction.
struct LabeledBox {
  Box box;
  ChartCategory category = ChartCategory::kOthers;
  std::optional<double> score;
  std::int64_t id = 0;
};

// Source vocabulary of the PMC annotations (pre-refinement).
enum class RawCategory : int {
  kAxisTitle,
  kTickLabel,
  kTickMark,
  kChartTitle,
  kLegendMarker,
  kLegendLabel,
  kLegendTitle,
  kValueLabel,
  kMarkLabel,
  kTickGrouping,
  kOthers,
  kPlotArea,
};

const std::string& raw_category_name(RawCategory c);
RawCategory raw_category_from_name(const std::string& name);  // throws SchemaError

enum class AxisSide { kX, kY };

struct SourceAnnotation {
  Box box;
  std::string raw_category;
  std::optional<AxisSide> axis_association;
  std::int64_t id = 0;
};

// Returns the single plot-area box of the annotation list.
// Throws RefinementError unless exactly one exists.
Box find_plot_area(const std::vector<SourceAnnotation>& annotations);

// Relabels every axis title / tick label / tick mark as x-* or y-* and maps
// the remaining raw categories 1:1 onto refined ones. Boxes are unchanged.
// When axis_association is absent the assignment is geometric: centers below
// the plot area's bottom edge (2 px tolerance) go to x, centers left of the
// left edge go to y, and anything still ambiguous goes to the nearer of the
// two edges, ties to x.
std::vector<LabeledBox> separate_axis_elements(
    const std::vector<SourceAnnotation>& annotations, const Box& plot_area);

// Appends up to three tight-union area boxes (x-axis-area, y-axis-area,
// legend-area) to an already axis-separated list. Areas whose constituents
// are absent are skipped; existing boxes pass through unchanged.
std::vector<LabeledBox> synthesize_structure_areas(
    const std::vector<LabeledBox>& refined, const Box& plot_area);

// Inverse of the refinement for competition-compatible role scoring.
// The three synthesized areas have no PMC counterpart and map to nullopt.
std::optional<RawCategory> refined_to_raw(ChartCategory c);

}  // namespace chartdet
