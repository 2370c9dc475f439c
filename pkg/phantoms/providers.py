from dishka import Provider, Scope, provide

from phantoms.usecases import GenerateDatasetUseCase


class PhantomsProvider(Provider):
    scope = Scope.REQUEST
    component = "phantoms"

    @provide
    def get_generate_dataset_usecase(self) -> GenerateDatasetUseCase:
        """Get dataset generation use case"""
        return GenerateDatasetUseCase()
